#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ordlab/metric_sink.hpp"

using namespace ordlab;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path d = fs::temp_directory_path() / ("ordlab_sink_" + tag);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("memory sink: last and series") {
  MemoryMetricSink sink;
  sink.emit("norms", 0, "total_norm", 1.5);
  sink.emit("norms", 1, "total_norm", 2.5);
  sink.emit("norms", 1, "max_component", 0.25);
  CHECK(sink.last("norms", "total_norm") == 2.5);
  CHECK(sink.last("norms", "missing") == std::nullopt);
  auto s = sink.series("norms", "total_norm");
  REQUIRE(s.size() == 2);
  CHECK(s[0] == 1.5);
  CHECK(s[1] == 2.5);
}

TEST_CASE("format_metric_value round-trips doubles") {
  const double v = 0.1 + 0.2;  // not representable exactly
  std::string s = format_metric_value(v);
  CHECK(std::stod(s) == v);
  CHECK(format_metric_value(2.0) == "2");
}

TEST_CASE("file sink: csv long format with nan for undefined") {
  fs::path dir = temp_dir("csv");
  {
    FileMetricSink sink(dir);
    sink.emit("norms", 0, "total_norm", 3.0);
    sink.emit_undefined("norms", 0, "cos_sim");
    sink.emit("norms", 2, "total_norm", 4.0);
  }
  auto lines = read_lines(dir / "norms.csv");
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "epoch,key,value");
  CHECK(lines[1] == "0,total_norm,3");
  CHECK(lines[2] == "0,cos_sim,nan");
  CHECK(lines[3] == "2,total_norm,4");
  fs::remove_all(dir);
}

TEST_CASE("file sink: jsonl groups one object per epoch") {
  fs::path dir = temp_dir("jsonl");
  {
    FileMetricSink sink(dir);
    sink.emit("fourier", 0, "peak_frequency", 7.0);
    sink.emit_json("fourier", 0, "newly_acquired_freqs", nlohmann::json::array({7, 90}));
    sink.emit("fourier", 5, "peak_frequency", 9.0);
  }
  auto lines = read_lines(dir / "fourier.jsonl");
  REQUIRE(lines.size() == 2);
  auto first = nlohmann::json::parse(lines[0]);
  CHECK(first.at("epoch") == 0);
  CHECK(first.at("metrics").at("peak_frequency") == 7.0);
  CHECK(first.at("metrics").at("newly_acquired_freqs") == nlohmann::json::array({7, 90}));
  auto second = nlohmann::json::parse(lines[1]);
  CHECK(second.at("epoch") == 5);
  fs::remove_all(dir);
}

TEST_CASE("file sink: repeated keys within an epoch accumulate into arrays") {
  fs::path dir = temp_dir("repeat");
  {
    FileMetricSink sink(dir);
    sink.emit("hessian", 10, "rayleigh_quotient", 1.0);
    sink.emit("hessian", 10, "rayleigh_quotient", 2.0);
    sink.emit("hessian", 10, "rayleigh_quotient", 3.0);
  }
  auto lines = read_lines(dir / "hessian.jsonl");
  REQUIRE(lines.size() == 1);
  auto row = nlohmann::json::parse(lines[0]);
  CHECK(row.at("metrics").at("rayleigh_quotient") == nlohmann::json::array({1.0, 2.0, 3.0}));
  // the csv keeps every row separately
  auto csv = read_lines(dir / "hessian.csv");
  CHECK(csv.size() == 4);
  fs::remove_all(dir);
}

TEST_CASE("file sink: non-finite scalars become json null") {
  fs::path dir = temp_dir("nonfinite");
  {
    FileMetricSink sink(dir);
    sink.emit("norms", 0, "cos_sim", std::numeric_limits<double>::quiet_NaN());
  }
  auto lines = read_lines(dir / "norms.jsonl");
  REQUIRE(lines.size() == 1);
  auto row = nlohmann::json::parse(lines[0]);
  CHECK(row.at("metrics").at("cos_sim").is_null());
  fs::remove_all(dir);
}

TEST_CASE("tee sink forwards to all children") {
  MemoryMetricSink a, b;
  TeeMetricSink tee;
  tee.add(&a);
  tee.add(&b);
  tee.emit("norms", 3, "total_norm", 9.0);
  CHECK(a.last("norms", "total_norm") == 9.0);
  CHECK(b.last("norms", "total_norm") == 9.0);
}
