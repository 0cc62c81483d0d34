#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "ftaed/grid_io.hpp"
#include "ftaed/sensor_data.hpp"
#include "ftaed/time_util.hpp"
#include "testutil.hpp"

using namespace ftaed;
using testutil::TempDir;

static void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
}

TEST_CASE("civil date conversions round-trip") {
  // spans two leap years and a century boundary
  for (std::int64_t day = -10000; day <= 30000; day += 17) {
    CivilDate c = civil_from_days(day);
    REQUIRE(days_from_civil(c.year, c.month, c.day) == day);
  }
  REQUIRE(days_from_civil(1970, 1, 1) == 0);
  REQUIRE(days_from_civil(2023, 10, 1) == 19631);
  REQUIRE(format_date(19631) == "2023-10-01");
  REQUIRE(parse_date("2023-10-01") == 19631);
  REQUIRE(parse_date(format_date(0)) == 0);
}

TEST_CASE("parse_date rejects malformed input") {
  for (const char* bad : {"2023/10/01", "23-10-01", "2023-13-01", "2023-00-10",
                          "2023-10-32", "2023-1x-01", ""}) {
    REQUIRE_THROWS_MATCHES(parse_date(bad), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.kind() == ErrorKind::MalformedRow;
                           }));
  }
}

TEST_CASE("floor_div rounds toward negative infinity") {
  REQUIRE(floor_div(7, 2) == 3);
  REQUIRE(floor_div(-7, 2) == -4);
  REQUIRE(floor_div(-86400, 86400) == -1);
  REQUIRE(floor_div(-1, 86400) == -1);
  REQUIRE(floor_div(0, 86400) == 0);
}

TEST_CASE("day window step count") {
  DayWindow w;
  REQUIRE(w.steps_per_day() == 960);  // 4:00 to 12:00 at 30 s
  w.end_hour = 6.0;
  REQUIRE(w.steps_per_day() == 240);
  w.start_hour = 5.75;
  REQUIRE(w.steps_per_day() == 30);
}

TEST_CASE("shortest round-trip double formatting") {
  for (double v : {0.0, 1.0, -1.5, 0.1, 1.0 / 3.0, 54.6, 1e-17, 123456.789,
                   -9.3, 66.0}) {
    const std::string s = detail::format_double(v);
    REQUIRE(std::strtod(s.c_str(), nullptr) == v);
  }
  REQUIRE(detail::format_double(54.5) == "54.5");
  REQUIRE(detail::format_double(3.0) == "3");
}

TEST_CASE("sensor csv round-trips including absent channels") {
  TempDir tmp;
  std::vector<SensorReading> rs;
  SensorReading a;
  a.time_unix = 1696132800;
  a.milemarker = 54.5;
  a.lane = 1;
  a.speed = 63.2;
  a.volume = 7.0;
  a.occupancy = 11.25;
  SensorReading b;
  b.time_unix = 1696132830;
  b.milemarker = 54.0;
  b.lane = 4;
  b.speed = std::nullopt;  // radar dropout
  b.volume = 0.0;
  b.occupancy = std::nullopt;
  rs = {a, b};
  const std::string path = tmp.file("sensors.csv");
  write_sensor_csv(path, rs);
  auto back = parse_sensor_csv(path);
  REQUIRE(back.size() == 2);
  REQUIRE(back[0].time_unix == a.time_unix);
  REQUIRE(back[0].milemarker == a.milemarker);
  REQUIRE(back[0].lane == 1);
  REQUIRE(back[0].speed == a.speed);
  REQUIRE(back[0].volume == a.volume);
  REQUIRE(back[0].occupancy == a.occupancy);
  REQUIRE_FALSE(back[1].speed.has_value());
  REQUIRE_FALSE(back[1].occupancy.has_value());
  REQUIRE(back[1].volume == 0.0);
}

TEST_CASE("sensor csv parse failures carry the right kind") {
  TempDir tmp;
  auto kind_of = [&](const std::string& body) {
    const std::string p = tmp.file("bad.csv");
    write_text(p, body);
    try {
      parse_sensor_csv(p);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::UnknownKind;
  };
  REQUIRE(kind_of("nope\n1,2,3,4,5,6\n") == ErrorKind::MissingHeader);
  REQUIRE(kind_of("") == ErrorKind::MissingHeader);
  const std::string h = std::string(kSensorCsvHeader) + "\n";
  REQUIRE(kind_of(h + "100,54.5,1,60,5\n") == ErrorKind::MalformedRow);
  REQUIRE(kind_of(h + "100,54.5,1,60,5,3,9\n") == ErrorKind::MalformedRow);
  REQUIRE(kind_of(h + "abc,54.5,1,60,5,3\n") == ErrorKind::MalformedRow);
  REQUIRE(kind_of(h + "100,54.5,1,6x,5,3\n") == ErrorKind::MalformedRow);
  REQUIRE(kind_of(h + "100,,1,60,5,3\n") == ErrorKind::MalformedRow);
  REQUIRE(kind_of(h + "100,54.5,5,60,5,3\n") == ErrorKind::OutOfRangeValue);
  REQUIRE(kind_of(h + "100,54.5,0,60,5,3\n") == ErrorKind::OutOfRangeValue);
  REQUIRE(kind_of(h + "100,54.5,1,121,5,3\n") == ErrorKind::OutOfRangeValue);
  REQUIRE(kind_of(h + "100,54.5,1,-1,5,3\n") == ErrorKind::OutOfRangeValue);
  REQUIRE(kind_of(h + "100,54.5,1,60,-2,3\n") == ErrorKind::OutOfRangeValue);
  REQUIRE(kind_of(h + "100,54.5,1,60,5,101\n") == ErrorKind::OutOfRangeValue);
  // blank lines and boundary values are fine
  const std::string p = tmp.file("ok.csv");
  write_text(p, h + "\n100,54.5,1,0,0,0\n\n130,54.5,4,120,3,100\n");
  REQUIRE(parse_sensor_csv(p).size() == 2);
}

TEST_CASE("incident csv round-trips and sorts by report time") {
  TempDir tmp;
  IncidentLog log;
  IncidentRecord r1;
  r1.report_time_unix = 2000;
  r1.milemarker = 52.25;
  r1.kind = IncidentKind::Manual;
  IncidentRecord r2;
  r2.report_time_unix = 1000;
  r2.milemarker = std::nullopt;
  r2.kind = IncidentKind::Crash;
  log.records = {r1, r2};
  const std::string path = tmp.file("incidents.csv");
  write_incident_csv(path, log);
  auto back = parse_incident_csv(path);
  REQUIRE(back.records.size() == 2);
  REQUIRE(back.records[0].report_time_unix == 1000);  // sorted on read
  REQUIRE(back.records[0].kind == IncidentKind::Crash);
  REQUIRE_FALSE(back.records[0].milemarker.has_value());
  REQUIRE(back.records[1].kind == IncidentKind::Manual);
  REQUIRE(back.records[1].milemarker == 52.25);

  write_text(tmp.file("badkind.csv"),
             std::string(kIncidentCsvHeader) + "\n100,54.5,fire\n");
  try {
    parse_incident_csv(tmp.file("badkind.csv"));
    FAIL("expected UnknownKind");
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::UnknownKind);
  }
}

TEST_CASE("assemble_grid orders nodes milemarker-descending, lane-ascending") {
  std::vector<SensorReading> rs;
  const std::int64_t t0 = 19700 * 86400 + 4 * 3600;
  for (double mm : {50.0, 50.5}) {
    for (int lane : {2, 1}) {
      SensorReading r;
      r.time_unix = t0;
      r.milemarker = mm;
      r.lane = lane;
      r.speed = mm + lane;  // recognizable
      rs.push_back(r);
    }
  }
  SensorGrid g = assemble_grid(rs);
  REQUIRE(g.n_milemarkers() == 2);
  REQUIRE(g.milemarkers[0] == 50.5);
  REQUIRE(g.milemarkers[1] == 50.0);
  REQUIRE(g.n_lanes == 2);
  REQUIRE(g.node_id(0, 1) == 0);
  REQUIRE(g.node_id(1, 2) == 3);
  REQUIRE(g.value(0, 0, Feature::Speed) == Catch::Approx(51.5));   // 50.5 lane 1
  REQUIRE(g.value(0, 3, Feature::Speed) == Catch::Approx(52.0));   // 50.0 lane 2
  REQUIRE(g.mm_index_of(3) == 1);
  REQUIRE(g.lane_of(3) == 2);
  // only this one tick is observed
  REQUIRE(g.is_missing(1, 0, Feature::Speed));
  REQUIRE_FALSE(g.fully_observed());
}

TEST_CASE("assemble_grid reports duplicates and drops out-of-window rows") {
  const std::int64_t t0 = 19700 * 86400 + 4 * 3600;
  SensorReading in;
  in.time_unix = t0;
  in.milemarker = 50.0;
  in.lane = 1;
  in.speed = 60.0;
  SensorReading dup = in;
  dup.speed = 61.0;
  SensorReading outside = in;
  outside.time_unix = t0 - 3600;  // 3:00, before the window opens
  AssembleReport rep;
  SensorGrid g = assemble_grid({in, dup, outside}, DayWindow{}, &rep);
  REQUIRE(rep.duplicate_cells == 1);
  REQUIRE(rep.outside_window == 1);
  REQUIRE(g.value(0, 0, Feature::Speed) == 61.0f);  // last one wins
  REQUIRE(g.n_days() == 1);
}

TEST_CASE("assemble_grid rejects off-cadence timestamps") {
  const std::int64_t t0 = 19700 * 86400 + 4 * 3600;
  SensorReading r;
  r.time_unix = t0 + 17;
  r.milemarker = 50.0;
  r.lane = 1;
  r.speed = 60.0;
  try {
    assemble_grid({r});
    FAIL("expected InconsistentCadence");
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::InconsistentCadence);
  }
  try {
    assemble_grid({});
    FAIL("expected EmptyInput");
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::EmptyInput);
  }
  r.time_unix = t0 - 3600;  // in no window at all
  try {
    assemble_grid({r});
    FAIL("expected EmptyInput");
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::EmptyInput);
  }
}

TEST_CASE("multi-day grids keep day-major contiguous times") {
  std::vector<SensorReading> rs;
  for (int d : {0, 2}) {  // a gap day in between
    SensorReading r;
    r.time_unix = (19700 + d) * 86400LL + 4 * 3600;
    r.milemarker = 50.0;
    r.lane = 1;
    r.speed = 60.0;
    rs.push_back(r);
  }
  DayWindow w;
  w.end_hour = 4.5;  // 60 steps per day
  SensorGrid g = assemble_grid(rs, w);
  REQUIRE(g.n_days() == 2);
  REQUIRE(g.day_numbers[0] == 19700);
  REQUIRE(g.day_numbers[1] == 19702);
  REQUIRE(g.n_times() == 120);
  REQUIRE(g.times[59] - g.times[0] == 59 * 30);
  REQUIRE(g.times[60] - g.times[59] > 30);  // day boundary
  REQUIRE(g.day_of_time(59) == 0);
  REQUIRE(g.day_of_time(60) == 1);
  REQUIRE(g.tick_of_time(61) == 1);
}

TEST_CASE("utc offset shifts the day window") {
  // 4:00 local at UTC-6 is 10:00 UTC
  const std::int64_t day = 19700;
  const std::int64_t t_local4 = day * 86400 + 6 * 3600 + 4 * 3600;
  SensorReading r;
  r.time_unix = t_local4;
  r.milemarker = 50.0;
  r.lane = 1;
  r.speed = 60.0;
  DayWindow w;
  w.utc_offset_hours = -6;
  w.end_hour = 4.5;
  SensorGrid g = assemble_grid({r}, w);
  REQUIRE(g.n_days() == 1);
  REQUIRE(g.day_numbers[0] == day);
  REQUIRE(g.times[0] == t_local4);
  REQUIRE_FALSE(g.is_missing(0, 0, Feature::Speed));
}

TEST_CASE("grid_to_readings then assemble_grid reproduces the grid") {
  SensorGrid g = testutil::traffic_grid(3, 2, 2, 8);
  // punch some holes
  g.missing[g.cell(3, 1, 0)] = 1;
  g.missing[g.cell(5, 4, 2)] = 1;
  auto rs = grid_to_readings(g);
  SensorGrid back = assemble_grid(rs, g.window);
  REQUIRE(back.n_times() == g.n_times());
  REQUIRE(back.milemarkers == g.milemarkers);
  REQUIRE(back.n_lanes == g.n_lanes);
  REQUIRE(back.times == g.times);
  REQUIRE(back.values.size() == g.values.size());
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    REQUIRE(back.missing[i] == g.missing[i]);
    if (!g.missing[i]) REQUIRE(back.values[i] == g.values[i]);
  }
}

TEST_CASE("grid archive round-trips bit-exactly") {
  TempDir tmp;
  SensorGrid g = testutil::traffic_grid(4, 3, 2, 12);
  g.missing[g.cell(1, 2, 1)] = 1;
  g.window.utc_offset_hours = -6;
  for (auto& t : g.times) t += 6 * 3600;  // keep times consistent with offset
  const std::string path = tmp.file("grid.bin");
  write_grid(path, g);
  SensorGrid back = read_grid(path);
  REQUIRE(back.times == g.times);
  REQUIRE(back.milemarkers == g.milemarkers);
  REQUIRE(back.n_lanes == g.n_lanes);
  REQUIRE(back.steps_per_day == g.steps_per_day);
  REQUIRE(back.day_numbers == g.day_numbers);
  REQUIRE(back.window.start_hour == g.window.start_hour);
  REQUIRE(back.window.end_hour == g.window.end_hour);
  REQUIRE(back.window.utc_offset_hours == g.window.utc_offset_hours);
  REQUIRE(back.values == g.values);
  REQUIRE(back.missing == g.missing);
}

TEST_CASE("grid archive rejects corruption") {
  TempDir tmp;
  SensorGrid g = testutil::traffic_grid(2, 2, 1, 4);
  const std::string path = tmp.file("grid.bin");
  write_grid(path, g);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  in.close();

  auto kind_of = [&](const std::string& body) {
    const std::string p = tmp.file("corrupt.bin");
    write_text(p, body);
    try {
      read_grid(p);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::UnknownKind;
  };
  REQUIRE(kind_of("GARBAGE v9\n" + bytes.substr(14)) == ErrorKind::MissingHeader);
  REQUIRE(kind_of(bytes.substr(0, bytes.size() - 5)) == ErrorKind::MalformedRow);
  REQUIRE(kind_of(bytes + "x") == ErrorKind::MalformedRow);
  try {
    read_grid(tmp.file("does_not_exist.bin"));
    FAIL("expected IoError");
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::IoError);
  }
}
