#include "commands.hpp"

#include "mcg/checkpoint.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mcg;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

struct Workspace {
  fs::path root;
  explicit Workspace(const std::string& name) : root(fs::temp_directory_path() / ("mcg_cli_" + name)) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }

  std::string config(const std::string& name, const std::string& text) const {
    const fs::path p = root / name;
    std::ofstream(p) << text;
    return p.string();
  }
  std::string out(const std::string& name = "out") const { return (root / name).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path run_dir(const std::string& out, const std::string& config_path) {
  return fs::path(out) / ExperimentConfig::load(config_path).hash_hex();
}

// Parses the CSV grids: one vector per basis function.
std::vector<std::vector<double>> read_grids(const fs::path& p) {
  std::vector<std::vector<double>> grids(1);
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      grids.emplace_back();
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
      grids.back().push_back(std::stod(cell));
  }
  while (!grids.empty() && grids.back().empty())
    grids.pop_back();
  return grids;
}

const char* kSmallClassify = "seed = 3\n[model]\nlayers = wmcg:out=4:pool=2; wmcg:out=4\n"
                             "[data]\ntrain_size = 24\ntest_size = 12\nimage_size = 12\n"
                             "[optim]\nepochs = 1\nbatch = 8\n";

} // namespace

TEST_CASE("basis dump of a Dirac basis") {
  Workspace ws("dirac");
  const auto cfg = ws.config("c.txt", "[basis]\nkind = dirac\nkernel_size = 3\nnum_basis = 9\n");
  const Run r = run({"--config", cfg, "--out", ws.out(), "basis", "dump"});
  REQUIRE(r.code == cli::kExitOk);
  const auto grids = read_grids(run_dir(ws.out(), cfg) / "basis_reference.csv");
  REQUIRE(grids.size() == 9);
  for (std::size_t j = 0; j < 9; ++j) {
    REQUIRE(grids[j].size() == 9);
    for (std::size_t p = 0; p < 9; ++p)
      CHECK(grids[j][p] == (p == j ? 1.0 : 0.0));
  }
}

TEST_CASE("basis dump of the default FB basis has unit norms") {
  Workspace ws("fb");
  const auto cfg = ws.config("c.txt", "[basis]\nkind = fb\nkernel_size = 5\nnum_basis = 9\n");
  REQUIRE(run({"--config", cfg, "--out", ws.out(), "basis", "dump"}).code == cli::kExitOk);
  const auto grids = read_grids(run_dir(ws.out(), cfg) / "basis_reference.csv");
  REQUIRE(grids.size() == 9);
  for (const auto& g : grids) {
    REQUIRE(g.size() == 25);
    double sq = 0.0;
    for (double v : g)
      sq += v * v;
    CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(fs::exists(run_dir(ws.out(), cfg) / "basis_transformed.csv"));
  CHECK(fs::exists(run_dir(ws.out(), cfg) / "config.txt"));
}

TEST_CASE("config errors exit with code 2") {
  Workspace ws("cfgerr");
  Run r = run({"--config", ws.config("c.txt", "[optim]\nlearnrate = 0.1\n"), "--out", ws.out(), "check"});
  CHECK(r.code == cli::kExitConfig);
  CHECK(r.err.find("optim.learnrate") != std::string::npos);
  r = run({"--config", ws.config("d.txt", "[ranges]\nshear_max = 0.5pi\n"), "--out", ws.out(), "check"});
  CHECK(r.code == cli::kExitConfig);
  CHECK(r.err.find("shear_max") != std::string::npos);
  CHECK(run({"frobnicate"}).code == cli::kExitConfig);
  CHECK(run({}).code == cli::kExitConfig);
  CHECK(run({"--config", (ws.root / "missing.txt").string(), "check"}).code == cli::kExitFailure);
}

TEST_CASE("check passes on defaults") {
  const Run r = run({"check"});
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("PASS group_axioms") != std::string::npos);
}

TEST_CASE("converge on a constant integrand") {
  Workspace ws("const");
  const auto cfg = ws.config("c.txt", "[converge]\nkind = constant\ncounts = 4,16\nseeds = 3\n");
  const Run r = run({"--config", cfg, "--out", ws.out(), "converge"});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(r.out.find("undefined") != std::string::npos);
  std::ifstream in(run_dir(ws.out(), cfg) / "convergence.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "N,seed,abs_err");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(line.substr(line.rfind(',') + 1) == "0");
  }
  CHECK(rows == 6);
}

TEST_CASE("mge writes one row per image") {
  Workspace ws("mge");
  const auto cfg = ws.config("c.txt", "[mge]\nimages = 3\nimage_size = 16\nchannels = 2\nseeds = 2\n");
  REQUIRE(run({"--config", cfg, "--out", ws.out(), "mge"}).code == cli::kExitOk);
  std::ifstream in(run_dir(ws.out(), cfg) / "mge.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "seed,image_idx,mge_raw,mge_norm");
  int rows = 0;
  while (std::getline(in, line))
    ++rows;
  CHECK(rows == 6);
}

TEST_CASE("zero-epoch training stores the initialization") {
  Workspace ws("init");
  const std::string text = std::string(kSmallClassify) + "epochs = 0\n";
  const auto cfg = ws.config("c.txt", text);
  REQUIRE(run({"--config", cfg, "--out", ws.out(), "--quiet", "train"}).code == cli::kExitOk);
  const auto config = ExperimentConfig::load(cfg);
  const auto data = cli::make_datasets(config);
  Network net = cli::make_network(config, data.train);
  const Checkpoint expected = capture_checkpoint(net, config.hash());
  const Checkpoint stored = read_checkpoint(run_dir(ws.out(), cfg) / "checkpoint.bin");
  CHECK(stored.config_hash == expected.config_hash);
  REQUIRE(stored.arrays.size() == expected.arrays.size());
  for (std::size_t i = 0; i < stored.arrays.size(); ++i) {
    CHECK(stored.arrays[i].name == expected.arrays[i].name);
    CHECK(stored.arrays[i].values == expected.arrays[i].values);
  }
}

TEST_CASE("train then eval reproduces the final loss") {
  Workspace ws("train_eval");
  const auto cfg = ws.config("c.txt", kSmallClassify);
  const Run t = run({"--config", cfg, "--out", ws.out(), "train"});
  REQUIRE(t.code == cli::kExitOk);
  const fs::path dir = run_dir(ws.out(), cfg);
  for (const char* f : {"metrics.csv", "classify.csv", "checkpoint.bin", "final_loss.txt", "config.txt"})
    CHECK(fs::exists(dir / f));
  const double final_loss = std::stod(slurp(dir / "final_loss.txt"));

  const Run e = run({"--config", cfg, "--out", ws.out(), "eval", "--checkpoint", (dir / "checkpoint.bin").string()});
  REQUIRE(e.code == cli::kExitOk);
  std::ifstream in(dir / "eval.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "train_loss,metric");
  const double eval_loss = std::stod(row.substr(0, row.find(',')));
  CHECK(std::abs(eval_loss - final_loss) <= 1e-12);

  SUBCASE("checkpoint from another config") {
    const auto other = ws.config("o.txt", std::string(kSmallClassify) + "[optim]\nlr = 0.01\n");
    const Run m = run({"--config", other, "--out", ws.out(), "eval", "--checkpoint", (dir / "checkpoint.bin").string()});
    CHECK(m.code == cli::kExitCheckpointMismatch);
    CHECK(m.err.find("hash") != std::string::npos);
  }
  SUBCASE("missing checkpoint") {
    const Run m = run({"--config", cfg, "--out", ws.out(), "eval", "--checkpoint", (ws.root / "nope.bin").string()});
    CHECK(m.code == cli::kExitFailure);
  }
  SUBCASE("corrupt checkpoint") {
    const fs::path bad = ws.root / "bad.bin";
    std::ofstream(bad) << "garbage";
    CHECK(run({"--config", cfg, "--out", ws.out(), "eval", "--checkpoint", bad.string()}).code == cli::kExitFailure);
  }
}

TEST_CASE("denoise training writes a PSNR row") {
  Workspace ws("denoise");
  const auto cfg = ws.config("c.txt", "[model]\ntask = denoise\nlayers = wmcg:out=2; bottleneck:out=2:mid=2:norm=false:relu=false\n"
                                      "[data]\nkind = denoise\ntrain_size = 8\ntest_size = 4\npatch_size = 12\n"
                                      "[optim]\nepochs = 1\nbatch = 4\nlr = 0.01\n");
  REQUIRE(run({"--config", cfg, "--out", ws.out(), "--quiet", "train"}).code == cli::kExitOk);
  std::ifstream in(run_dir(ws.out(), cfg) / "denoise.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "sigma,psnr");
  CHECK(row.substr(0, row.find(',')) == "25");
}

TEST_CASE("repeated runs give identical artifacts") {
  Workspace ws("determinism");
  const auto cfg = ws.config("c.txt", kSmallClassify);
  REQUIRE(run({"--config", cfg, "--out", ws.out("a"), "--quiet", "train"}).code == cli::kExitOk);
  REQUIRE(run({"--config", cfg, "--out", ws.out("b"), "--quiet", "train"}).code == cli::kExitOk);
  const fs::path a = run_dir(ws.out("a"), cfg), b = run_dir(ws.out("b"), cfg);
  for (const char* f : {"metrics.csv", "classify.csv", "checkpoint.bin", "final_loss.txt", "config.txt"})
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);

  SUBCASE("seed override changes the run directory") {
    REQUIRE(run({"--config", cfg, "--out", ws.out("c"), "--seed", "4", "--quiet", "train"}).code == cli::kExitOk);
    CHECK_FALSE(fs::exists(run_dir(ws.out("c"), cfg)));
  }
}
