#include "ordlab/metric_sink.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace ordlab {

std::optional<double> MemoryMetricSink::last(const std::string& hook,
                                             const std::string& key) const {
  for (auto it = records_.rbegin(); it != records_.rend(); ++it)
    if (it->hook == hook && it->key == key && it->is_scalar()) return it->value;
  return std::nullopt;
}

std::vector<double> MemoryMetricSink::series(const std::string& hook,
                                             const std::string& key) const {
  std::vector<double> out;
  for (const auto& r : records_)
    if (r.hook == hook && r.key == key && r.is_scalar() && r.value) out.push_back(*r.value);
  return out;
}

std::string format_metric_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct FileMetricSink::HookFiles {
  std::FILE* csv = nullptr;
  std::FILE* jsonl = nullptr;
  std::uint64_t pending_epoch = 0;
  bool has_pending = false;
  nlohmann::json pending;  // object accumulating the epoch's keys

  ~HookFiles() {
    if (csv) std::fclose(csv);
    if (jsonl) std::fclose(jsonl);
  }
};

FileMetricSink::FileMetricSink(std::filesystem::path metrics_dir)
    : dir_(std::move(metrics_dir)) {
  std::filesystem::create_directories(dir_);
}

FileMetricSink::~FileMetricSink() { flush(); }

FileMetricSink::HookFiles& FileMetricSink::files_for(const std::string& hook) {
  auto it = hooks_.find(hook);
  if (it != hooks_.end()) return *it->second;
  auto hf = std::make_unique<HookFiles>();
  auto csv_path = dir_ / (hook + ".csv");
  auto jsonl_path = dir_ / (hook + ".jsonl");
  hf->csv = std::fopen(csv_path.string().c_str(), "wb");
  hf->jsonl = std::fopen(jsonl_path.string().c_str(), "wb");
  if (!hf->csv || !hf->jsonl)
    throw std::runtime_error("cannot open metric files under " + dir_.string());
  std::fputs("epoch,key,value\n", hf->csv);
  return *hooks_.emplace(hook, std::move(hf)).first->second;
}

void FileMetricSink::flush_jsonl_epoch(HookFiles& hf) {
  if (!hf.has_pending) return;
  nlohmann::json line;
  line["epoch"] = hf.pending_epoch;
  line["metrics"] = std::move(hf.pending);
  std::string s = line.dump();
  s.push_back('\n');
  std::fwrite(s.data(), 1, s.size(), hf.jsonl);
  hf.pending = nlohmann::json::object();
  hf.has_pending = false;
}

void FileMetricSink::write(const MetricRecord& rec) {
  HookFiles& hf = files_for(rec.hook);
  if (hf.has_pending && hf.pending_epoch != rec.epoch) flush_jsonl_epoch(hf);
  hf.pending_epoch = rec.epoch;
  hf.has_pending = true;

  // repeated keys within one epoch (e.g. per-step probe rows) accumulate into
  // a JSON array instead of overwriting
  auto put = [&hf](const std::string& key, nlohmann::json v) {
    if (!hf.pending.contains(key)) {
      hf.pending[key] = std::move(v);
    } else if (hf.pending[key].is_array()) {
      hf.pending[key].push_back(std::move(v));
    } else {
      nlohmann::json arr = nlohmann::json::array();
      arr.push_back(std::move(hf.pending[key]));
      arr.push_back(std::move(v));
      hf.pending[key] = std::move(arr);
    }
  };

  if (rec.is_scalar()) {
    const std::string v = rec.value ? format_metric_value(*rec.value) : "nan";
    std::fprintf(hf.csv, "%llu,%s,%s\n", static_cast<unsigned long long>(rec.epoch),
                 rec.key.c_str(), v.c_str());
    if (rec.value && std::isfinite(*rec.value))
      put(rec.key, *rec.value);
    else
      put(rec.key, nullptr);
  } else {
    put(rec.key, rec.payload);
  }
}

void FileMetricSink::flush() {
  for (auto& [name, hf] : hooks_) {
    flush_jsonl_epoch(*hf);
    if (hf->csv) std::fflush(hf->csv);
    if (hf->jsonl) std::fflush(hf->jsonl);
  }
}

}  // namespace ordlab
