#include "jitflow/store.hpp"

#include <fstream>
#include <sstream>

#include "jitflow/dsl.hpp"
#include "jitflow/error.hpp"
#include "jitflow/jit.hpp"

namespace jitflow {

namespace fs = std::filesystem;

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("io", "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

FlowDefinition load_flow_file(const fs::path& path) {
  auto text = read_file(path);
  if (path.extension() == ".flow") {
    auto parsed = parse_dsl(DslSource{text, SourceOrigin::File});
    if (!parsed.ok()) {
      throw Error("dsl-parse", path.string() + ":" + parsed.diagnostics.front().to_string(),
                  Json{{"line", parsed.diagnostics.front().line}, {"column", parsed.diagnostics.front().column}});
    }
    return *parsed.flow;
  }
  return parse_flow_document(text);
}

void save_flow_file(const fs::path& path, const FlowDefinition& flow) {
  write_file_atomic(path, path.extension() == ".flow" ? render_dsl(flow) : serialize_flow(flow));
}

FlowStore::FlowStore(std::optional<fs::path> root) : root_(std::move(root)) {
  if (!root_) return;
  auto dir = *root_ / "flows";
  fs::create_directories(dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    const std::string suffix = ".flow.json";
    if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
    auto id = name.substr(0, name.size() - suffix.size());
    if (!valid_id(id)) continue;
    flows_.emplace(id, parse_flow_document(read_file(entry.path())));
  }
}

bool FlowStore::valid_id(std::string_view id) {
  if (id.empty() || id.size() > 128) return false;
  return std::all_of(id.begin(), id.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_'; });
}

std::string FlowStore::content_id(const FlowDefinition& flow) {
  // FNV-1a over the canonical serialization.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : serialize_flow(flow)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 12);
}

std::string FlowStore::put(const FlowDefinition& flow, std::optional<std::string> id) {
  const auto key = id ? *id : content_id(flow);
  if (!valid_id(key)) throw Error("invalid-id", "flow id '" + key + "' must match [A-Za-z0-9_-]{1,128}");
  if (key == jit::kCodegenFlowId) throw Error("reserved-id", "flow id '" + key + "' is reserved");
  std::unique_lock lock(mutex_);
  if (root_) write_file_atomic(*root_ / "flows" / (key + ".flow.json"), serialize_flow(flow));
  flows_.insert_or_assign(key, canonicalize(flow));
  return key;
}

std::optional<FlowDefinition> FlowStore::find_flow(std::string_view id) const {
  if (id == jit::kCodegenFlowId) return jit::builtin_jit_flow();
  std::shared_lock lock(mutex_);
  auto it = flows_.find(id);
  if (it == flows_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> FlowStore::ids() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out{jit::kCodegenFlowId};
  for (const auto& [id, _] : flows_) out.push_back(id);
  return out;
}

std::string iso8601(std::chrono::system_clock::time_point t) {
  using namespace std::chrono;
  auto ms = duration_cast<milliseconds>(t.time_since_epoch()).count();
  std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof(out), "%s.%03lldZ", buf, static_cast<long long>(ms % 1000));
  return out;
}

Json RunRecord::to_json() const {
  Json j{{"runId", run_id},
         {"flowId", flow_id},
         {"state", to_string(state)},
         {"pendingGate", pending_gate ? Json(*pending_gate) : Json(nullptr)},
         {"startedAt", started_at},
         {"finishedAt", finished_at ? Json(*finished_at) : Json(nullptr)},
         {"outputs", outputs}};
  if (!error.is_null()) j["error"] = error;
  return j;
}

RunRecord RunRecord::from_json(const Json& j) {
  RunRecord r;
  r.run_id = j.at("runId").get<std::string>();
  r.flow_id = j.value("flowId", std::string());
  r.state = run_state_from_string(j.at("state").get<std::string>());
  if (j.contains("pendingGate") && j["pendingGate"].is_string()) r.pending_gate = j["pendingGate"].get<std::string>();
  r.started_at = j.value("startedAt", std::string());
  if (j.contains("finishedAt") && j["finishedAt"].is_string()) r.finished_at = j["finishedAt"].get<std::string>();
  r.outputs = j.value("outputs", Json::object());
  if (j.contains("error")) r.error = j["error"];
  return r;
}

RunStore::RunStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_ / "runs"); }

fs::path RunStore::dir(const std::string& run_id) const { return root_ / "runs" / run_id; }

std::mutex& RunStore::lock_for(const std::string& run_id) {
  std::lock_guard lock(mutex_);
  auto& slot = locks_[run_id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

void RunStore::create(const RunRecord& record, const Json& inputs) {
  std::lock_guard lock(lock_for(record.run_id));
  auto d = dir(record.run_id);
  fs::create_directories(d);
  write_file_atomic(d / "input.json", inputs.dump(2) + "\n");
  write_file_atomic(d / "trace.jsonl", "");
  write_file_atomic(d / "outputs.json", record.outputs.dump(2) + "\n");
  write_file_atomic(d / "status.json", record.to_json().dump(2) + "\n");
}

void RunStore::append_event(const std::string& run_id, const TraceEvent& event) {
  std::lock_guard lock(lock_for(run_id));
  std::ofstream out(dir(run_id) / "trace.jsonl", std::ios::app | std::ios::binary);
  out << event.to_json_line() << "\n";
  out.flush();
  if (!out) throw Error("io", "cannot append to trace of run " + run_id);
}

void RunStore::write_status(const RunRecord& record) {
  std::lock_guard lock(lock_for(record.run_id));
  auto d = dir(record.run_id);
  write_file_atomic(d / "outputs.json", record.outputs.dump(2) + "\n");
  write_file_atomic(d / "status.json", record.to_json().dump(2) + "\n");
}

std::optional<RunRecord> RunStore::load(const std::string& run_id) const {
  auto path = dir(run_id) / "status.json";
  if (!fs::exists(path)) return std::nullopt;
  return RunRecord::from_json(Json::parse(read_file(path)));
}

std::vector<std::string> RunStore::trace_lines(const std::string& run_id) const {
  std::vector<std::string> lines;
  std::istringstream in(read_file(dir(run_id) / "trace.jsonl"));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

Json RunStore::inputs(const std::string& run_id) const { return Json::parse(read_file(dir(run_id) / "input.json")); }

std::vector<std::string> RunStore::run_ids() const {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(root_ / "runs")) {
    if (entry.is_directory() && fs::exists(entry.path() / "status.json")) out.push_back(entry.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace jitflow
