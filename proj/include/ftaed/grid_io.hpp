#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ftaed/errors.hpp"
#include "ftaed/sensor_data.hpp"

namespace ftaed {

// Grid archive: text header describing the geometry, then the value array as
// raw little-endian float32 and the missing mask as raw bytes. Times are not
// stored; they are rebuilt from the day numbers and the day window.
inline void write_grid(const std::string& path, const SensorGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << "FTAED-GRID v1\n";
  out << "n_lanes=" << grid.n_lanes << " steps_per_day=" << grid.steps_per_day
      << " n_milemarkers=" << grid.n_milemarkers()
      << " n_days=" << grid.n_days()
      << " start_hour=" << detail::format_double(grid.window.start_hour)
      << " end_hour=" << detail::format_double(grid.window.end_hour)
      << " utc_offset=" << grid.window.utc_offset_hours << "\n";
  out << "milemarkers";
  for (double mm : grid.milemarkers) out << ' ' << detail::format_double(mm);
  out << "\ndays";
  for (std::int64_t d : grid.day_numbers) out << ' ' << d;
  out << "\ndata\n";
  out.write(reinterpret_cast<const char*>(grid.values.data()),
            static_cast<std::streamsize>(grid.values.size() * sizeof(float)));
  out.write(reinterpret_cast<const char*>(grid.missing.data()),
            static_cast<std::streamsize>(grid.missing.size()));
  if (!out) fail(ErrorKind::IoError, "short write to " + path);
}

inline SensorGrid read_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path);
  std::string line;
  auto need_line = [&](const char* what) {
    if (!std::getline(in, line))
      fail(ErrorKind::MalformedRow, path + ": missing " + what);
  };
  need_line("magic");
  if (line != "FTAED-GRID v1")
    fail(ErrorKind::MissingHeader, path + ": not a grid archive");

  SensorGrid grid;
  need_line("geometry");
  int n_mm = 0, n_days = 0;
  if (std::sscanf(line.c_str(),
                  "n_lanes=%d steps_per_day=%d n_milemarkers=%d n_days=%d "
                  "start_hour=%lf end_hour=%lf utc_offset=%d",
                  &grid.n_lanes, &grid.steps_per_day, &n_mm, &n_days,
                  &grid.window.start_hour, &grid.window.end_hour,
                  &grid.window.utc_offset_hours) != 7)
    fail(ErrorKind::MalformedRow, path + ": bad geometry line");
  if (grid.n_lanes < 1 || grid.steps_per_day < 1 || n_mm < 1 || n_days < 1)
    fail(ErrorKind::OutOfRangeValue, path + ": non-positive geometry");

  need_line("milemarkers");
  {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag != "milemarkers")
      fail(ErrorKind::MalformedRow, path + ": expected milemarkers line");
    double v;
    while (ss >> v) grid.milemarkers.push_back(v);
    if (static_cast<int>(grid.milemarkers.size()) != n_mm)
      fail(ErrorKind::MalformedRow, path + ": milemarker count mismatch");
  }
  need_line("days");
  {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag != "days")
      fail(ErrorKind::MalformedRow, path + ": expected days line");
    std::int64_t d;
    while (ss >> d) grid.day_numbers.push_back(d);
    if (static_cast<int>(grid.day_numbers.size()) != n_days)
      fail(ErrorKind::MalformedRow, path + ": day count mismatch");
  }
  need_line("data marker");
  if (line != "data")
    fail(ErrorKind::MalformedRow, path + ": expected data marker");

  const int n_times = n_days * grid.steps_per_day;
  grid.times.resize(n_times);
  const std::int64_t offset_s =
      static_cast<std::int64_t>(grid.window.utc_offset_hours) * 3600;
  const std::int64_t start_s =
      static_cast<std::int64_t>(std::llround(grid.window.start_hour * 3600.0));
  for (int d = 0; d < n_days; ++d)
    for (int s = 0; s < grid.steps_per_day; ++s)
      grid.times[d * grid.steps_per_day + s] =
          grid.day_numbers[d] * 86400 - offset_s + start_s + 30 * s;

  const std::size_t n_cells =
      static_cast<std::size_t>(n_times) * grid.n_nodes() * kNumFeatures;
  grid.values.resize(n_cells);
  grid.missing.resize(n_cells);
  in.read(reinterpret_cast<char*>(grid.values.data()),
          static_cast<std::streamsize>(n_cells * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != n_cells * sizeof(float))
    fail(ErrorKind::MalformedRow, path + ": truncated value block");
  in.read(reinterpret_cast<char*>(grid.missing.data()),
          static_cast<std::streamsize>(n_cells));
  if (static_cast<std::size_t>(in.gcount()) != n_cells)
    fail(ErrorKind::MalformedRow, path + ": truncated missing block");
  char extra;
  if (in.read(&extra, 1))
    fail(ErrorKind::MalformedRow, path + ": trailing bytes after data");
  return grid;
}

}  // namespace ftaed
