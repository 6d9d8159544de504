#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace ordlab {

// One emitted measurement. Scalar values go to both CSV and JSONL; structured
// payloads (dicts, lists) appear only in the JSONL mirror. An empty optional
// records "undefined" (CSV `nan`, JSON null) rather than a silent zero.
struct MetricRecord {
  std::string hook;
  std::uint64_t epoch = 0;
  std::string key;
  std::optional<double> value;
  nlohmann::json payload;  // non-scalar alternative; null when unused

  bool is_scalar() const { return payload.is_null(); }
};

class MetricSink {
 public:
  virtual ~MetricSink() = default;
  virtual void write(const MetricRecord& rec) = 0;
  virtual void flush() {}

  void emit(const std::string& hook, std::uint64_t epoch, const std::string& key,
            double value) {
    write({hook, epoch, key, value, nullptr});
  }
  void emit_undefined(const std::string& hook, std::uint64_t epoch, const std::string& key) {
    write({hook, epoch, key, std::nullopt, nullptr});
  }
  void emit_json(const std::string& hook, std::uint64_t epoch, const std::string& key,
                 nlohmann::json payload) {
    write({hook, epoch, key, std::nullopt, std::move(payload)});
  }
};

// In-memory sink for tests and cmd_compare style analysis.
class MemoryMetricSink : public MetricSink {
 public:
  void write(const MetricRecord& rec) override { records_.push_back(rec); }
  const std::vector<MetricRecord>& records() const { return records_; }

  // last scalar value for (hook, key), if any
  std::optional<double> last(const std::string& hook, const std::string& key) const;
  std::vector<double> series(const std::string& hook, const std::string& key) const;

 private:
  std::vector<MetricRecord> records_;
};

// Writes metrics/<hook>.csv (long format: epoch,key,value — scalars only) and
// metrics/<hook>.jsonl (one object per epoch holding every key, including
// structured payloads). Scalars print with "%.17g" so reruns are
// byte-comparable.
class FileMetricSink : public MetricSink {
 public:
  explicit FileMetricSink(std::filesystem::path metrics_dir);
  ~FileMetricSink() override;

  void write(const MetricRecord& rec) override;
  void flush() override;

 private:
  struct HookFiles;
  HookFiles& files_for(const std::string& hook);
  void flush_jsonl_epoch(HookFiles& hf);

  std::filesystem::path dir_;
  std::map<std::string, std::unique_ptr<HookFiles>> hooks_;
};

std::string format_metric_value(double v);

// Forwards every record to several sinks (e.g. file + in-memory).
class TeeMetricSink : public MetricSink {
 public:
  void add(MetricSink* sink) { sinks_.push_back(sink); }
  void write(const MetricRecord& rec) override {
    for (auto* s : sinks_) s->write(rec);
  }
  void flush() override {
    for (auto* s : sinks_) s->flush();
  }

 private:
  std::vector<MetricSink*> sinks_;
};

}  // namespace ordlab
