#include "wapilog/jsonl.hpp"

#include "wapilog/errors.hpp"

namespace wapilog {

json entry_to_json(const LogEntry& e) {
  json j;
  j["source_id"] = e.source_id;
  j["file_order"] = e.file_order;
  if (e.client_ip) j["client_ip"] = *e.client_ip;
  j["timestamp"] = {{"epoch_millis", e.timestamp.epoch_millis},
                    {"granularity", to_string(e.timestamp.granularity)}};
  json query = json::array();
  for (const auto& [k, v] : e.request.query) query.push_back(json::array({k, v}));
  j["request"] = {{"method", e.request.method},
                  {"path", e.request.path},
                  {"query", std::move(query)},
                  {"protocol", e.request.protocol}};
  j["status"] = e.status;
  if (e.object_size) j["object_size"] = *e.object_size;
  if (e.referer) j["referer"] = *e.referer;
  if (e.user_agent) j["user_agent"] = *e.user_agent;
  if (e.duration) j["duration"] = *e.duration;
  if (e.generalized_path) j["generalized_path"] = *e.generalized_path;
  if (e.timestamp_repaired) j["timestamp_repaired"] = true;
  if (e.split_recovered) j["split_recovered"] = true;
  return j;
}

namespace {

template <typename T>
std::optional<T> opt(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

}  // namespace

LogEntry entry_from_json(const json& j) {
  LogEntry e;
  e.source_id = j.at("source_id").get<std::string>();
  e.file_order = j.at("file_order").get<std::int64_t>();
  e.client_ip = opt<std::string>(j, "client_ip");
  const auto& ts = j.at("timestamp");
  e.timestamp.epoch_millis = ts.at("epoch_millis").get<std::int64_t>();
  auto g = granularity_from_string(ts.at("granularity").get<std::string>());
  if (!g) throw std::invalid_argument("unknown timestamp granularity");
  e.timestamp.granularity = *g;
  const auto& rq = j.at("request");
  e.request.method = rq.at("method").get<std::string>();
  e.request.path = rq.at("path").get<std::string>();
  e.request.protocol = rq.value("protocol", std::string{});
  if (auto q = rq.find("query"); q != rq.end()) {
    for (const auto& kv : *q) {
      e.request.query.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
    }
  }
  e.status = j.at("status").get<int>();
  e.object_size = opt<std::int64_t>(j, "object_size");
  e.referer = opt<std::string>(j, "referer");
  e.user_agent = opt<std::string>(j, "user_agent");
  e.duration = opt<std::int64_t>(j, "duration");
  e.generalized_path = opt<std::string>(j, "generalized_path");
  e.timestamp_repaired = j.value("timestamp_repaired", false);
  e.split_recovered = j.value("split_recovered", false);
  return e;
}

void write_jsonl(std::ostream& out, const json& j) {
  out << j.dump() << '\n';
  if (!out) throw IoError("write failed");
}

void read_jsonl(std::istream& in, const std::string& name,
                const std::function<void(const json&)>& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& ex) {
      throw IoError(name + ":" + std::to_string(line_no) + ": invalid JSON: " + ex.what());
    }
    try {
      fn(j);
    } catch (const json::exception& ex) {
      throw IoError(name + ":" + std::to_string(line_no) + ": " + ex.what());
    } catch (const std::invalid_argument& ex) {
      throw IoError(name + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  if (in.bad()) throw IoError("read failed: " + name);
}

}  // namespace wapilog
