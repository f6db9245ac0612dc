#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dsf/config.hpp"
#include "dsf/core/image_io.hpp"
#include "dsf/core/rng.hpp"
#include "dsf/core/threading.hpp"
#include "dsf/io/tensor.hpp"
#include "fixtures.hpp"

using namespace dsf;
namespace fs = std::filesystem;

namespace {

const std::string kCli = DSF_CLI_PATH;

fs::path tmp(const std::string& name) { return fs::temp_directory_path() / ("dsf_cli_" + name); }

int run_cli(const std::string& args, const fs::path& stdout_to = {}) {
  std::string cmd = kCli + " " + args;
  if (!stdout_to.empty()) cmd += " > " + stdout_to.string() + " 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<unsigned char> slurp_bytes(const fs::path& p) {
  const std::string s = slurp(p);
  return {s.begin(), s.end()};
}

}  // namespace

TEST_CASE("tensor: round-trip is a bitwise identity (random tensors)") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor t;
    t.dtype = trial % 2 == 0 ? 1 : 2;
    const int nd = 1 + static_cast<int>(rng.bounded(3));
    std::size_t n = 1;
    for (int d = 0; d < nd; ++d) {
      t.dims.push_back(1 + static_cast<std::uint32_t>(rng.bounded(9)));
      n *= t.dims.back();
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (t.dtype == 1)
        t.f32.push_back(static_cast<float>(rng.uniform(-10.0, 10.0)));
      else
        t.f64.push_back(rng.uniform(-10.0, 10.0));
    }
    const auto p = tmp("roundtrip.dsf");
    write_tensor(t, p);
    const Tensor back = read_tensor(p);
    CHECK(back.dtype == t.dtype);
    CHECK(back.dims == t.dims);
    if (t.dtype == 1)
      CHECK(std::memcmp(back.f32.data(), t.f32.data(), 4 * n) == 0);
    else
      CHECK(std::memcmp(back.f64.data(), t.f64.data(), 8 * n) == 0);

    // Byte-identical on rewrite.
    const auto p2 = tmp("roundtrip2.dsf");
    write_tensor(back, p2);
    CHECK(slurp_bytes(p) == slurp_bytes(p2));
    fs::remove(p);
    fs::remove(p2);
  }
}

TEST_CASE("tensor: header layout is exactly as specified") {
  Tensor t;
  t.dtype = 1;
  t.dims = {2, 3};
  t.f32 = {0.0f, 1.0f, 2.0f, 3.0f, 4.0f, 5.0f};
  const auto p = tmp("hdr.dsf");
  write_tensor(t, p);
  const auto bytes = slurp_bytes(p);
  REQUIRE(bytes.size() == 4 + 1 + 1 + 8 + 24);
  CHECK(bytes[0] == 'D');
  CHECK(bytes[1] == 'S');
  CHECK(bytes[2] == 'F');
  CHECK(bytes[3] == '1');
  CHECK(bytes[4] == 1);  // f32
  CHECK(bytes[5] == 2);  // ndim
  CHECK(bytes[6] == 2);  // dims[0] LE
  CHECK(bytes[10] == 3);
  fs::remove(p);
}

TEST_CASE("tensor: malformed files are rejected") {
  const auto p = tmp("bad.dsf");
  std::ofstream(p, std::ios::binary) << "XXXX";
  CHECK_THROWS(read_tensor(p));
  std::ofstream(p, std::ios::binary) << "DSF1";
  CHECK_THROWS(read_tensor(p));
  fs::remove(p);
  Tensor t;
  t.dtype = 1;
  t.dims = {4};
  t.f32 = {1.0f};  // payload mismatch
  CHECK_THROWS(write_tensor(t, p));
}

TEST_CASE("config: defaults, file parsing, validation") {
  const RunConfig def;
  CHECK(def.lambda_rec == 8.0);
  CHECK(def.lambda_det == 2.0);
  CHECK(def.lambda_desc == 2.0);
  CHECK(def.lambda_adv == 1.0);
  CHECK(def.scales == 5);
  CHECK(def.filter_sizes == std::vector<int>{9, 15, 21, 27, 33});

  const RunConfig empty = parse_config("{}");
  CHECK(empty.lambda_rec == 8.0);

  const RunConfig got = parse_config(R"({"scales": 3, "detection_threshold": 1e-3})");
  CHECK(got.scales == 3);
  CHECK(got.detection_threshold == 1e-3);
  CHECK(got.active_filter_sizes() == std::vector<int>{9, 15, 21});

  CHECK_THROWS(parse_config(R"({"unknown_key": 1})"));
  CHECK_THROWS(parse_config(R"({"detection_threshold": -1})"));
  CHECK_THROWS(parse_config(R"({"scales": 9})"));
  CHECK_THROWS(parse_config(R"({"filter_sizes": [8]})"));
  CHECK_THROWS(parse_config("not json"));
}

TEST_CASE("cli: detect on a constant image emits only the CSV header") {
  const auto img = tmp("const.pgm");
  save_image(GrayImage::Constant(48, 48, 0.5f), img);
  const auto out = tmp("detect.csv");
  const int rc = run_cli("detect " + img.string(), out);
  CHECK(rc == 0);
  CHECK(slurp(out) == "x,y,scale_index,response,laplacian_sign\n");
  fs::remove(img);
  fs::remove(out);
}

TEST_CASE("cli: loss rec of an image with itself is zero") {
  const auto img = tmp("self.png");
  save_image(testing::blob_image(40, 40, 5), img);
  const auto out = tmp("loss.json");
  const int rc = run_cli("loss rec " + img.string() + " " + img.string(), out);
  CHECK(rc == 0);
  const std::string j = slurp(out);
  CHECK(j.find("\"rec\": 0.0") != std::string::npos);
  CHECK(j.find("\"lambda_rec\": 8.0") != std::string::npos);
  fs::remove(img);
  fs::remove(out);
}

TEST_CASE("cli: exit codes distinguish usage from runtime failures") {
  CHECK(run_cli("definitely-not-a-subcommand", tmp("x")) == 1);
  CHECK(run_cli("loss bogus a.png b.png", tmp("x")) == 1);
  CHECK(run_cli("detect /nonexistent/image.png", tmp("x")) == 2);
  CHECK(run_cli("--help", tmp("x")) == 0);
  fs::remove(tmp("x"));
}

TEST_CASE("cli: flags override config file values") {
  const auto cfgp = tmp("cfg.json");
  std::ofstream(cfgp) << R"({"scales": 5, "detection_threshold": 0.001})";
  const auto img = tmp("blob.png");
  save_image(testing::blob_image(64, 64, 6), img);
  const auto out1 = tmp("d1.csv"), out2 = tmp("d2.csv");
  // --scales 2 overrides the file's 5; a lower threshold admits more points.
  CHECK(run_cli("detect " + img.string() + " --config " + cfgp.string() + " --scales 2", out1) ==
        0);
  CHECK(run_cli("detect " + img.string() + " --config " + cfgp.string() + " --scales 2 " +
                    "--detection-threshold 1e-6",
                out2) == 0);
  const std::string csv1 = slurp(out1), csv2 = slurp(out2);
  CHECK(std::count(csv2.begin(), csv2.end(), '\n') >= std::count(csv1.begin(), csv1.end(), '\n'));
  // No scale_index beyond 1 may appear with --scales 2.
  std::istringstream lines(csv1);
  std::string line;
  std::getline(lines, line);  // header
  while (std::getline(lines, line)) {
    std::istringstream ls(line);
    std::string x, y, si;
    std::getline(ls, x, ',');
    std::getline(ls, y, ',');
    std::getline(ls, si, ',');
    CHECK(std::stoi(si) <= 1);
  }
  fs::remove(cfgp);
  fs::remove(img);
  fs::remove(out1);
  fs::remove(out2);
}

TEST_CASE("cli: describe writes per-scale tensors with dims (64, H, W)") {
  const auto img = tmp("desc.png");
  save_image(testing::blob_image(40, 40, 7), img);
  const auto prefix = tmp("densemap").string();
  CHECK(run_cli("describe " + img.string() + " --scales 2 --out-prefix " + prefix,
                tmp("describe.out")) == 0);
  for (int i = 0; i < 2; ++i) {
    const fs::path p = prefix + "_scale" + std::to_string(i) + ".dsf";
    REQUIRE(fs::exists(p));
    const Tensor t = read_tensor(p);
    CHECK(t.dims == std::vector<std::uint32_t>{64, 40, 40});
    fs::remove(p);
  }
  fs::remove(img);
  fs::remove(tmp("describe.out"));
}

TEST_CASE("cli: adv/disc losses consume score-map tensors") {
  const Plane<float> ones = Plane<float>::Constant(4, 4, 1.0f);
  const Plane<float> zeros = Plane<float>::Constant(4, 4, 0.0f);
  const auto p_ones = tmp("ones.dsf"), p_zeros = tmp("zeros.dsf");
  write_tensor(tensor_from_plane(ones), p_ones);
  write_tensor(tensor_from_plane(zeros), p_zeros);
  const auto out = tmp("adv.json");
  CHECK(run_cli("loss adv " + p_ones.string(), out) == 0);
  CHECK(slurp(out).find("\"adv\": 0.0") != std::string::npos);
  CHECK(run_cli("loss disc " + p_ones.string() + " " + p_zeros.string(), out) == 0);
  CHECK(slurp(out).find("\"disc\": 0.0") != std::string::npos);
  fs::remove(p_ones);
  fs::remove(p_zeros);
  fs::remove(out);
}

TEST_CASE("cli: detect --dump-det writes an (S, H, W) response tensor") {
  const auto img = tmp("dump.png");
  save_image(testing::blob_image(40, 40, 9), img);
  const auto dump = tmp("det.dsf");
  CHECK(run_cli("detect " + img.string() + " --scales 3 --dump-det " + dump.string(),
                tmp("dd.out")) == 0);
  const Tensor t = read_tensor(dump);
  CHECK(t.dims == std::vector<std::uint32_t>{3, 40, 40});
  CHECK(t.dtype == 1);
  fs::remove(img);
  fs::remove(dump);
  fs::remove(tmp("dd.out"));
}

TEST_CASE("cli: bench reports per-scale rows with fast below naive") {
  const auto out = tmp("bench.csv");
  CHECK(run_cli("bench --size 256", out) == 0);
  std::istringstream csv(slurp(out));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "scale_index,filter_size,step,fast_ms,naive_ms,speedup");
  int rows = 0;
  while (std::getline(csv, line)) {
    std::istringstream ls(line);
    std::string tok;
    std::vector<std::string> cols;
    while (std::getline(ls, tok, ',')) cols.push_back(tok);
    REQUIRE(cols.size() == 6);
    CHECK(std::stod(cols[3]) < std::stod(cols[4]));  // fast < naive
    ++rows;
  }
  CHECK(rows == 5);
  fs::remove(out);
}

TEST_CASE("resolve_threads: flag beats DSF_THREADS beats the default") {
  unsetenv("DSF_THREADS");
  CHECK(resolve_threads(0) == 1);
  CHECK(resolve_threads(7) == 7);
  setenv("DSF_THREADS", "3", 1);
  CHECK(resolve_threads(0) == 3);
  CHECK(resolve_threads(2) == 2);
  unsetenv("DSF_THREADS");
}

TEST_CASE("cli: match produces a deterministic JSON report across runs and threads") {
  const auto a = tmp("ma.png"), b = tmp("mb.png");
  save_image(testing::blob_image(72, 72, 8, 30), a);
  save_image(testing::blob_image(72, 72, 8, 30), b);  // same fixture: self-match
  const auto o1 = tmp("m1.json"), o2 = tmp("m2.json"), o3 = tmp("m3.json");
  const std::string base = "match " + a.string() + " " + b.string() + " --no-timings";
  CHECK(run_cli(base, o1) == 0);
  CHECK(run_cli(base, o2) == 0);
  CHECK(run_cli(base + " --threads 4", o3) == 0);
  const std::string j1 = slurp(o1);
  CHECK(j1 == slurp(o2));
  CHECK(j1 == slurp(o3));
  CHECK(j1.find("\"verified\": true") != std::string::npos);
  for (const auto& p : {a, b, o1, o2, o3}) fs::remove(p);
}
