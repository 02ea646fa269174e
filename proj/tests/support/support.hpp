#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "jitflow/flow.hpp"
#include "jitflow/store.hpp"
#include "jitflow/types.hpp"

namespace jitflow::testkit {

inline std::filesystem::path fixture(const std::string& relative) {
  return std::filesystem::path(JITFLOW_FIXTURE_DIR) / relative;
}

inline FlowDefinition fixture_flow(const std::string& name) { return load_flow_file(fixture("flows/" + name)); }

inline std::string random_text(std::mt19937_64& rng, std::size_t max_len, bool allow_empty = true) {
  static const std::vector<std::string> alphabet = {
      "a", "b", "Z", "0", "7", " ", "_", "-", "\"", "\\", "\n", "\t", "{", "}", "#", "$", "/", ",",
      "\xc3\xa9", "\xe2\x82\xac", "\xf0\x9f\x99\x82", "'", "=", ":"};
  std::uniform_int_distribution<std::size_t> len_dist(allow_empty ? 0 : 1, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s;
  for (auto n = len_dist(rng); n > 0; --n) s += alphabet[pick(rng)];
  return s;
}

inline std::string random_identifier(std::mt19937_64& rng, const std::string& prefix) {
  std::uniform_int_distribution<int> n(0, 99999);
  return prefix + std::to_string(n(rng));
}

/// Random flow that validates against the standard catalog: external Int
/// inputs feeding a DAG of Calculators and KeyValuePairs, with random text
/// params, gates, names and versions.
inline FlowDefinition random_valid_flow(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(1, 8);
  std::bernoulli_distribution coin(0.5);
  FlowDefinition f;
  f.name = random_text(rng, 12);
  f.version = std::uniform_int_distribution<std::int64_t>(1, 1'000'000)(rng);

  const int n_in = count(rng) % 3 + 1;
  std::vector<std::string> int_sources;
  for (int i = 0; i < n_in; ++i) {
    ModuleInstance m{"in" + std::to_string(i), "ExternalIntInput"};
    f.modules.push_back(m);
    f.external_inputs.push_back({"x" + std::to_string(i) + random_text(rng, 4), {m.id, "Input"}});
    int_sources.push_back(m.id + ".Result");
  }
  const int n_calc = count(rng);
  for (int i = 0; i < n_calc; ++i) {
    ModuleInstance m{"c" + std::to_string(i), "Calculator"};
    static const char* ops[] = {"+", "-", "*", "/"};
    if (coin(rng)) m.params["Operator"] = ops[std::uniform_int_distribution<int>(0, 3)(rng)];
    m.gated = coin(rng) && coin(rng);
    std::uniform_int_distribution<std::size_t> src(0, int_sources.size() - 1);
    f.connections.push_back({Endpoint::parse(int_sources[src(rng)]), {m.id, "Param1"}});
    f.connections.push_back({Endpoint::parse(int_sources[src(rng)]), {m.id, "Param2"}});
    f.modules.push_back(m);
    int_sources.push_back(m.id + ".Result");
  }
  const int n_kv = count(rng) % 3;
  for (int i = 0; i < n_kv; ++i) {
    ModuleInstance m{"kv" + std::to_string(i), "KeyValuePair"};
    m.params["Key"] = random_text(rng, 10, false);
    if (coin(rng)) m.params["Value"] = random_text(rng, 16);
    f.modules.push_back(m);
  }
  ModuleInstance out{"out", "ExternalIntOutput"};
  f.modules.push_back(out);
  f.connections.push_back({Endpoint::parse(int_sources.back()), {"out", "Input"}});
  f.external_outputs.push_back({"result" + random_text(rng, 4), {"out", "Result"}});

  std::shuffle(f.modules.begin(), f.modules.end(), rng);
  std::shuffle(f.connections.begin(), f.connections.end(), rng);
  return f;
}

inline Cell random_cell(std::mt19937_64& rng, int kind) {
  std::uniform_int_distribution<int> small(-50, 50);
  switch (kind) {
    case 0: return static_cast<double>(small(rng));
    case 1: return static_cast<double>(small(rng)) / 4.0;
    case 2: return std::bernoulli_distribution(0.5)(rng);
    case 3: return std::monostate{};
    default: return random_text(rng, 8);
  }
}

/// Arbitrary table: mixed cell kinds, awkward text, duplicate-free columns.
inline Table random_table(std::mt19937_64& rng, int max_rows = 20, int max_cols = 4) {
  const int cols = std::uniform_int_distribution<int>(1, max_cols)(rng);
  const int rows = std::uniform_int_distribution<int>(0, max_rows)(rng);
  std::vector<std::string> names;
  std::set<std::string> seen;
  while (static_cast<int>(names.size()) < cols) {
    auto name = random_text(rng, 6, false);
    if (seen.insert(name).second) names.push_back(name);
  }
  std::vector<std::vector<Cell>> data;
  std::uniform_int_distribution<int> kind(0, 4);
  for (int r = 0; r < rows; ++r) {
    std::vector<Cell> row;
    for (int c = 0; c < cols; ++c) row.push_back(random_cell(rng, kind(rng)));
    data.push_back(std::move(row));
  }
  return Table(std::move(names), std::move(data));
}

/// Table with one cell kind per column and values drawn from a small pool so
/// that duplicate rows are common.
inline Table random_duplicate_table(std::mt19937_64& rng) {
  const int cols = std::uniform_int_distribution<int>(1, 4)(rng);
  const int rows = std::uniform_int_distribution<int>(0, 20)(rng);
  std::vector<std::string> names;
  std::vector<int> kinds;
  for (int c = 0; c < cols; ++c) {
    names.push_back("col" + std::to_string(c));
    kinds.push_back(std::uniform_int_distribution<int>(0, 1)(rng));
  }
  std::uniform_int_distribution<int> pool(0, 2);
  static const char* words[] = {"red", "green", "blue"};
  std::vector<std::vector<Cell>> data;
  for (int r = 0; r < rows; ++r) {
    std::vector<Cell> row;
    for (int c = 0; c < cols; ++c) {
      if (kinds[c] == 0) {
        row.emplace_back(static_cast<double>(pool(rng)));
      } else {
        row.emplace_back(std::string(words[pool(rng)]));
      }
    }
    data.push_back(std::move(row));
  }
  return Table(std::move(names), std::move(data));
}

/// Row i is kept iff an equal row occurs at some index j < i.
inline Table duplicates_oracle(const Table& t) {
  std::vector<std::vector<Cell>> kept;
  const auto& rows = t.rows();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (rows[j] == rows[i]) {
        kept.push_back(rows[i]);
        break;
      }
    }
  }
  return Table(t.columns(), std::move(kept));
}

/// A random DAG of Int Calculators (+ and -) over external Int inputs, with
/// every sink exported. `values` is filled by evaluating the graph directly.
struct RandomDag {
  FlowDefinition flow;
  std::map<std::string, Value> inputs;
  std::map<std::string, std::int64_t> expected;  // external output -> value
};

inline RandomDag random_dag(std::mt19937_64& rng, int max_nodes = 12) {
  RandomDag d;
  d.flow.name = "dag";
  std::uniform_int_distribution<int> nodes(1, max_nodes);
  const int n_in = std::uniform_int_distribution<int>(1, 3)(rng);
  std::map<std::string, std::int64_t> value;  // "module" -> Result value
  std::vector<std::string> sources;
  std::set<std::string> consumed;
  for (int i = 0; i < n_in; ++i) {
    const auto id = "in" + std::to_string(i);
    d.flow.modules.push_back({id, "ExternalIntInput"});
    d.flow.external_inputs.push_back({id, {id, "Input"}});
    const std::int64_t v = std::uniform_int_distribution<int>(-100, 100)(rng);
    d.inputs.emplace(id, Value::integer(v));
    value[id] = v;
    sources.push_back(id);
  }
  const int n = nodes(rng);
  for (int i = 0; i < n; ++i) {
    const auto id = "n" + std::to_string(i);
    const bool add = std::bernoulli_distribution(0.6)(rng);
    ModuleInstance m{id, "Calculator"};
    m.params["Operator"] = add ? "+" : "-";
    std::uniform_int_distribution<std::size_t> pick(0, sources.size() - 1);
    const auto a = sources[pick(rng)];
    const auto b = sources[pick(rng)];
    d.flow.connections.push_back({{a, "Result"}, {id, "Param1"}});
    d.flow.connections.push_back({{b, "Result"}, {id, "Param2"}});
    consumed.insert(a);
    consumed.insert(b);
    value[id] = add ? value[a] + value[b] : value[a] - value[b];
    d.flow.modules.push_back(m);
    sources.push_back(id);
  }
  for (const auto& s : sources) {
    if (consumed.contains(s) || s.starts_with("in")) continue;
    const auto out = "out_" + s;
    d.flow.modules.push_back({out, "ExternalIntOutput"});
    d.flow.connections.push_back({{s, "Result"}, {out, "Input"}});
    d.flow.external_outputs.push_back({out, {out, "Result"}});
    d.expected[out] = value[s];
  }
  std::shuffle(d.flow.modules.begin(), d.flow.modules.end(), rng);
  return d;
}

/// Modules reachable from `id` along connections, excluding `id`.
inline std::set<std::string> descendants(const FlowDefinition& flow, const std::string& id) {
  std::set<std::string> out;
  std::vector<std::string> stack{id};
  while (!stack.empty()) {
    auto cur = stack.back();
    stack.pop_back();
    for (const auto& c : flow.connections) {
      if (c.from.module == cur && out.insert(c.to.module).second) stack.push_back(c.to.module);
    }
  }
  return out;
}

}  // namespace jitflow::testkit
