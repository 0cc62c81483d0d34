#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <random>

#include "ftaed/models.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace ftaed;
using ad::Tensor;

namespace {

Tensor random_tensor(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(rows, cols);
  for (auto& v : t.data) v = static_cast<float>(u(rng));
  return t;
}

template <class Fn>
ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::UnknownKind;
}

}  // namespace

TEST_CASE("model and activation names parse both ways") {
  for (auto k : {ModelKind::Mlp, ModelKind::Gcn, ModelKind::StgGcn,
                 ModelKind::StgGat, ModelKind::StgRgcn})
    REQUIRE(parse_model_kind(model_kind_name(k)) == k);
  for (auto a : {Activation::ReLU, Activation::Sigmoid, Activation::Tanh})
    REQUIRE(parse_activation(activation_name(a)) == a);
  REQUIRE(kind_of([] { parse_model_kind("resnet"); }) ==
          ErrorKind::ConfigError);
  REQUIRE(kind_of([] { parse_activation("gelu"); }) == ErrorKind::ConfigError);
}

TEST_CASE("per-architecture tuned defaults") {
  ModelConfig g = ModelConfig::defaults_for(ModelKind::Gcn);
  REQUIRE(g.dropout == 0.03);
  REQUIRE(g.hidden_dim == 64);
  REQUIRE(g.latent_dim == 128);
  REQUIRE(g.learning_rate == 0.0047);
  REQUIRE(g.n_layers == 2);

  ModelConfig sg = ModelConfig::defaults_for(ModelKind::StgGcn);
  REQUIRE(sg.hidden_dim == g.hidden_dim);
  REQUIRE(sg.learning_rate == g.learning_rate);
  REQUIRE(sg.timesteps == 2);

  ModelConfig ga = ModelConfig::defaults_for(ModelKind::StgGat);
  REQUIRE(ga.dropout == 0.09);
  REQUIRE(ga.hidden_dim == 128);
  REQUIRE(ga.latent_dim == 256);
  REQUIRE(ga.learning_rate == 0.0004);
  REQUIRE(ga.n_layers == 1);
  REQUIRE(ga.gat_heads == 4);
  REQUIRE(ga.timesteps == 2);

  ModelConfig rg = ModelConfig::defaults_for(ModelKind::StgRgcn);
  REQUIRE(rg.dropout == 0.45);
  REQUIRE(rg.hidden_dim == 128);
  REQUIRE(rg.latent_dim == 32);
  REQUIRE(rg.learning_rate == 0.0017);
  REQUIRE(rg.n_layers == 1);
  REQUIRE(rg.timesteps == 8);

  ModelConfig m = ModelConfig::defaults_for(ModelKind::Mlp);
  REQUIRE(m.hidden_dim == 128);
  REQUIRE(m.latent_dim == 2);
  REQUIRE(m.learning_rate == 0.0023);
  REQUIRE(m.n_layers == 2);
}

TEST_CASE("config validation rejects out-of-range settings") {
  ModelConfig c = ModelConfig::defaults_for(ModelKind::Mlp);
  c.latent_dim = 3;  // the bottleneck is the whole point of this model
  REQUIRE(kind_of([&] { validate_config(c); }) == ErrorKind::ConfigMismatch);
  c = ModelConfig::defaults_for(ModelKind::Mlp);
  c.n_layers = 1;
  REQUIRE(kind_of([&] { validate_config(c); }) == ErrorKind::ConfigMismatch);
  c = ModelConfig::defaults_for(ModelKind::Gcn);
  c.dropout = 1.0;
  REQUIRE(kind_of([&] { validate_config(c); }) == ErrorKind::ConfigMismatch);
  c = ModelConfig::defaults_for(ModelKind::Gcn);
  c.latent_dim = 0;
  REQUIRE(kind_of([&] { validate_config(c); }) == ErrorKind::ConfigMismatch);
  c = ModelConfig::defaults_for(ModelKind::StgGat);
  c.gat_heads = 0;
  REQUIRE(kind_of([&] { validate_config(c); }) == ErrorKind::ConfigMismatch);
  c = ModelConfig::defaults_for(ModelKind::StgRgcn);
  c.timesteps = -1;
  REQUIRE(kind_of([&] { validate_config(c); }) == ErrorKind::ConfigMismatch);
}

TEST_CASE("initialization lays out parameters in checkpoint order") {
  GraphTopology base = build_static_topology(3, 2);

  SECTION("mlp has zero biases between glorot weights") {
    ModelConfig c = ModelConfig::defaults_for(ModelKind::Mlp);
    c.hidden_dim = 8;
    AutoencoderModel m = init_model(c, base, 1);
    std::vector<std::string> names;
    for (const auto& p : m.params) names.push_back(p.name);
    REQUIRE(names == std::vector<std::string>{"enc0.W", "enc0.b", "enc1.W",
                                              "enc1.b", "dec0.W", "dec0.b",
                                              "dec1.W", "dec1.b"});
    REQUIRE(m.param("enc0.W").rows == 3);
    REQUIRE(m.param("enc0.W").cols == 8);
    REQUIRE(m.param("enc1.W").cols == 2);
    REQUIRE(m.param("dec1.W").cols == 3);
    for (float v : m.param("enc0.b").data) REQUIRE(v == 0.0f);
    // glorot bound for the first weight
    double bound = std::sqrt(6.0 / (3 + 8));
    bool nonzero = false;
    for (float v : m.param("enc0.W").data) {
      REQUIRE(std::fabs(v) <= bound);
      nonzero = nonzero || v != 0.0f;
    }
    REQUIRE(nonzero);
  }

  SECTION("gcn bottleneck pools and re-expands every node") {
    ModelConfig c = ModelConfig::defaults_for(ModelKind::Gcn);
    c.hidden_dim = 5;
    c.latent_dim = 4;
    AutoencoderModel m = init_model(c, base, 1);
    std::vector<std::string> names;
    for (const auto& p : m.params) names.push_back(p.name);
    REQUIRE(names == std::vector<std::string>{"enc0.W", "enc1.W", "latent.W",
                                              "expand.W", "dec0.W", "dec1.W"});
    REQUIRE(m.param("latent.W").rows == 5);
    REQUIRE(m.param("latent.W").cols == 4);
    REQUIRE(m.param("expand.W").rows == 4);
    REQUIRE(m.param("expand.W").cols == 4 * 6);  // latent row per node
    REQUIRE(m.param("dec1.W").cols == 3);
    REQUIRE(m.n_all_nodes() == 6);
    REQUIRE(m.window_len() == 1);
  }

  SECTION("gat carries one attention vector per head per layer") {
    ModelConfig c = ModelConfig::defaults_for(ModelKind::StgGat);
    c.hidden_dim = 4;
    c.latent_dim = 3;
    c.gat_heads = 2;
    c.timesteps = 1;
    AutoencoderModel m = init_model(c, base, 1);
    REQUIRE(m.topo.n_slices == 2);
    REQUIRE(m.n_all_nodes() == 12);
    REQUIRE(m.window_len() == 2);
    REQUIRE(m.param("enc0.h0.a").rows == 8);
    REQUIRE(m.param("enc0.h0.a").cols == 1);
    REQUIRE(m.param("enc0.h1.a").rows == 8);
    // concatenated heads feed the latent projection
    REQUIRE(m.param("latent.W").rows == 8);
    // decoder output layer attends over 3 output features
    REQUIRE(m.param("dec0.h0.a").rows == 6);
  }

  SECTION("rgcn keeps one weight per relation plus a self weight") {
    ModelConfig c = ModelConfig::defaults_for(ModelKind::StgRgcn);
    c.hidden_dim = 4;
    c.latent_dim = 3;
    c.timesteps = 2;
    AutoencoderModel m = init_model(c, base, 1);
    REQUIRE(m.topo.n_relations == 5);
    for (int r = 0; r < 5; ++r) {
      REQUIRE(m.param("enc0.rel" + std::to_string(r) + ".W").rows == 3);
      REQUIRE(m.param("dec0.rel" + std::to_string(r) + ".W").cols == 3);
    }
    REQUIRE(m.param("enc0.self.W").cols == 4);
  }

  SECTION("spatiotemporal init rejects a non-static topology") {
    GraphTopology st = build_st_topology(base, 1);
    ModelConfig c = ModelConfig::defaults_for(ModelKind::Gcn);
    REQUIRE(kind_of([&] { init_model(c, st, 1); }) ==
            ErrorKind::ConfigMismatch);
  }
}

TEST_CASE("graph convolution layer matches the dense oracle") {
  std::mt19937_64 rng(7);
  GraphTopology topo = build_static_topology(4, 3);
  Tensor H = random_tensor(topo.n_nodes, 5, rng);
  Tensor W = random_tensor(5, 4, rng);
  for (auto act : std::vector<std::optional<Activation>>{
           Activation::ReLU, Activation::Tanh, std::nullopt}) {
    Tensor got = gcn_layer(H, topo, W, act);
    auto want = oracle::gcn_dense(oracle::from_tensor(H), topo,
                                  oracle::from_tensor(W), act);
    REQUIRE(oracle::max_abs_diff(want, got) < 1e-5);
  }
}

TEST_CASE("attention layer matches the dense oracle") {
  std::mt19937_64 rng(19);
  GraphTopology topo = build_static_topology(3, 3);
  Tensor H = random_tensor(topo.n_nodes, 4, rng);
  Tensor W = random_tensor(4, 3, rng);
  for (int heads : {1, 2}) {
    for (bool self_loops : {true, false}) {
      std::vector<Tensor> a;
      std::vector<oracle::Matrix> ao;
      for (int h = 0; h < heads; ++h) {
        a.push_back(random_tensor(6, 1, rng));
        ao.push_back(oracle::from_tensor(a.back()));
      }
      Tensor got = gat_layer(H, topo, W, a, heads, Activation::Sigmoid,
                             self_loops);
      auto want = oracle::gat_dense(oracle::from_tensor(H), topo,
                                    oracle::from_tensor(W), ao, self_loops,
                                    Activation::Sigmoid);
      REQUIRE(got.cols == 3 * heads);
      REQUIRE(oracle::max_abs_diff(want, got) < 1e-5);
    }
  }
}

TEST_CASE("relational layer matches the dense oracle") {
  std::mt19937_64 rng(23);
  GraphTopology topo = build_st_topology(build_static_topology(3, 2), 2);
  REQUIRE(topo.n_relations == 5);
  Tensor H = random_tensor(topo.n_nodes, 4, rng);
  std::vector<Tensor> Wr;
  std::vector<oracle::Matrix> Wro;
  for (int r = 0; r < 5; ++r) {
    Wr.push_back(random_tensor(4, 3, rng));
    Wro.push_back(oracle::from_tensor(Wr.back()));
  }
  Tensor W0 = random_tensor(4, 3, rng);
  Tensor got = rgcn_layer(H, topo, Wr, W0, Activation::ReLU);
  auto want = oracle::rgcn_dense(oracle::from_tensor(H), topo, Wro,
                                 oracle::from_tensor(W0), Activation::ReLU);
  REQUIRE(oracle::max_abs_diff(want, got) < 1e-5);
}

TEST_CASE("layer input validation") {
  std::mt19937_64 rng(3);
  GraphTopology topo = build_static_topology(3, 2);
  Tensor H = random_tensor(6, 4, rng);
  Tensor W_bad = random_tensor(5, 4, rng);
  REQUIRE(kind_of([&] { gcn_layer(H, topo, W_bad); }) ==
          ErrorKind::ShapeMismatch);
  Tensor W = random_tensor(4, 3, rng);
  std::vector<Tensor> a{random_tensor(6, 1, rng)};
  REQUIRE(kind_of([&] { gat_layer(H, topo, W, a, 2); }) ==
          ErrorKind::ShapeMismatch);
  std::vector<Tensor> a_bad{random_tensor(4, 1, rng)};
  REQUIRE(kind_of([&] { gat_layer(H, topo, W, a_bad, 1); }) ==
          ErrorKind::ShapeMismatch);
  std::vector<Tensor> Wr{W};  // topology has two relations
  REQUIRE(kind_of([&] { rgcn_layer(H, topo, Wr, W); }) ==
          ErrorKind::MissingRelationWeight);
}

TEST_CASE("batched forward equals stacked single-window forwards") {
  for (auto kind : {ModelKind::Mlp, ModelKind::Gcn, ModelKind::StgGcn,
                    ModelKind::StgGat, ModelKind::StgRgcn}) {
    ModelConfig c = ModelConfig::defaults_for(kind);
    c.hidden_dim = 6;
    if (kind != ModelKind::Mlp) c.latent_dim = 4;
    if (c.timesteps > 2) c.timesteps = 2;
    AutoencoderModel m = init_model(c, build_static_topology(3, 2), 9);

    std::mt19937_64 rng(31);
    Tensor x1 = random_tensor(m.n_all_nodes(), 3, rng);
    Tensor x2 = random_tensor(m.n_all_nodes(), 3, rng);
    Tensor both(2 * m.n_all_nodes(), 3);
    std::copy(x1.data.begin(), x1.data.end(), both.data.begin());
    std::copy(x2.data.begin(), x2.data.end(),
              both.data.begin() + x1.data.size());

    ForwardPlan plan = build_forward_plan(m, 2);
    ad::Tape tape;
    auto fv = model_forward_tape(m, tape, tape.leaf(both), plan, false,
                                 nullptr);
    Tensor batched = tape.value(fv.recon);
    REQUIRE(batched.rows == 2 * m.n_base_nodes());
    REQUIRE(batched.cols == 3);

    Tensor r1 = model_forward(m, x1);
    Tensor r2 = model_forward(m, x2);
    const std::size_t half = r1.data.size();
    for (std::size_t i = 0; i < half; ++i) {
      REQUIRE(batched.data[i] == Catch::Approx(r1.data[i]).margin(2e-6));
      REQUIRE(batched.data[half + i] == Catch::Approx(r2.data[i]).margin(2e-6));
    }
  }
}

TEST_CASE("spatiotemporal models reconstruct only the current slice") {
  ModelConfig c = ModelConfig::defaults_for(ModelKind::StgGcn);
  c.hidden_dim = 6;
  c.latent_dim = 4;
  AutoencoderModel m = init_model(c, build_static_topology(3, 2), 5);
  REQUIRE(m.window_len() == 3);
  std::mt19937_64 rng(8);
  Tensor x = random_tensor(m.n_all_nodes(), 3, rng);
  Tensor r = model_forward(m, x);
  REQUIRE(r.rows == m.n_base_nodes());

  // history still matters: perturbing the oldest slice moves the output
  Tensor x2 = x;
  x2.data[0] += 1.0f;
  Tensor r2 = model_forward(m, x2);
  bool moved = false;
  for (std::size_t i = 0; i < r.data.size(); ++i)
    moved = moved || r.data[i] != r2.data[i];
  REQUIRE(moved);

  Tensor wrong(m.n_base_nodes(), 3);
  REQUIRE(kind_of([&] { model_forward(m, wrong); }) ==
          ErrorKind::ConfigMismatch);
}

TEST_CASE("training-mode dropout perturbs the forward pass") {
  ModelConfig c = ModelConfig::defaults_for(ModelKind::Gcn);
  c.hidden_dim = 8;
  c.latent_dim = 4;
  c.dropout = 0.4;
  AutoencoderModel m = init_model(c, build_static_topology(3, 2), 2);
  std::mt19937_64 rng(55);
  Tensor x = random_tensor(m.n_all_nodes(), 3, rng);
  ForwardPlan plan = build_forward_plan(m, 1);

  ad::Tape tape;
  DropoutState d1{true, c.dropout, 77, 0};
  auto train_fv = model_forward_tape(m, tape, tape.leaf(x), plan, true, &d1);
  Tensor train_out = tape.value(train_fv.recon);
  Tensor eval_out = model_forward(m, x);
  bool differs = false;
  for (std::size_t i = 0; i < train_out.data.size(); ++i)
    differs = differs || train_out.data[i] != eval_out.data[i];
  REQUIRE(differs);

  // same seed and counter reproduce the same masked pass
  ad::Tape tape2;
  DropoutState d2{true, c.dropout, 77, 0};
  auto fv2 = model_forward_tape(m, tape2, tape2.leaf(x), plan, true, &d2);
  REQUIRE(tape2.value(fv2.recon).data == train_out.data);
}

TEST_CASE("external parameter wiring is validated") {
  ModelConfig c = ModelConfig::defaults_for(ModelKind::Gcn);
  c.hidden_dim = 4;
  c.latent_dim = 2;
  AutoencoderModel m = init_model(c, build_static_topology(2, 2), 3);
  ForwardPlan plan = build_forward_plan(m, 1);
  ad::Tape tape;
  ad::Var x = tape.leaf(Tensor(m.n_all_nodes(), 3));

  std::vector<ad::Var> too_few{tape.leaf(m.params[0].t)};
  REQUIRE(kind_of([&] {
            model_forward_tape(m, tape, x, plan, false, nullptr, &too_few);
          }) == ErrorKind::ConfigMismatch);

  std::vector<ad::Var> wrong_shape;
  for (const auto& p : m.params) wrong_shape.push_back(tape.leaf(p.t));
  wrong_shape[0] = tape.leaf(Tensor(1, 1));
  REQUIRE(kind_of([&] {
            model_forward_tape(m, tape, x, plan, false, nullptr, &wrong_shape);
          }) == ErrorKind::ConfigMismatch);

  // wiring the model's own values through external leaves changes nothing
  std::vector<ad::Var> same;
  for (const auto& p : m.params) same.push_back(tape.leaf(p.t));
  auto fv = model_forward_tape(m, tape, x, plan, false, nullptr, &same);
  auto fv_own = model_forward_tape(m, tape, x, plan, false, nullptr);
  REQUIRE(tape.value(fv.recon).data == tape.value(fv_own.recon).data);

  REQUIRE(kind_of([&] { build_forward_plan(m, 0); }) == ErrorKind::EmptyInput);
}

TEST_CASE("checkpoint round trip is bit exact") {
  testutil::TempDir dir;
  for (auto kind : {ModelKind::Mlp, ModelKind::StgGat, ModelKind::StgRgcn}) {
    ModelConfig c = ModelConfig::defaults_for(kind);
    c.hidden_dim = 5;
    if (kind != ModelKind::Mlp) c.latent_dim = 3;
    if (c.timesteps > 2) c.timesteps = 2;
    AutoencoderModel m = init_model(c, build_static_topology(3, 2), 17);
    auto path = dir.file("model.bin");
    save_model(path, m);
    AutoencoderModel back = load_model(path);
    REQUIRE(back.config.architecture == kind);
    REQUIRE(back.config.hidden_dim == c.hidden_dim);
    REQUIRE(back.config.timesteps == c.timesteps);
    REQUIRE(back.topo.n_nodes == m.topo.n_nodes);
    REQUIRE(back.params.size() == m.params.size());
    for (std::size_t i = 0; i < m.params.size(); ++i) {
      REQUIRE(back.params[i].name == m.params[i].name);
      REQUIRE(back.params[i].t.data == m.params[i].t.data);
    }
    // a loaded model reproduces the original forward pass exactly
    std::mt19937_64 rng(4);
    Tensor x = random_tensor(m.n_all_nodes(), 3, rng);
    REQUIRE(model_forward(back, x).data == model_forward(m, x).data);
  }
}

TEST_CASE("checkpoint corruption is detected") {
  testutil::TempDir dir;
  ModelConfig c = ModelConfig::defaults_for(ModelKind::Gcn);
  c.hidden_dim = 4;
  c.latent_dim = 2;
  AutoencoderModel m = init_model(c, build_static_topology(2, 2), 1);
  auto path = dir.file("model.bin");
  save_model(path, m);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  in.close();

  auto write_bytes = [&](const std::string& name, const std::string& body) {
    std::ofstream out(dir.file(name), std::ios::binary);
    out << body;
    return dir.file(name);
  };

  REQUIRE(kind_of([&] {
            load_model(write_bytes("magic", "NOPE\n" + bytes.substr(15)));
          }) == ErrorKind::MissingHeader);
  REQUIRE(kind_of([&] {
            load_model(write_bytes("trunc", bytes.substr(0, bytes.size() - 8)));
          }) == ErrorKind::IoError);
  REQUIRE(kind_of([&] { load_model(write_bytes("extra", bytes + "x")); }) ==
          ErrorKind::MalformedRow);
  REQUIRE(kind_of([&] { load_model(dir.file("absent")); }) ==
          ErrorKind::IoError);
}
