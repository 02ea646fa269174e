#include <gtest/gtest.h>

#include "jitflow/error.hpp"
#include "jitflow/script.hpp"
#include "jitflow/store.hpp"
#include "support.hpp"

using namespace jitflow;

TEST(FlowStore, PutFindAndPersist) {
  script::Workdir dir;
  const auto add = testkit::fixture_flow("add.flow");
  std::string id;
  {
    FlowStore store(dir.path());
    id = store.put(add);
    EXPECT_EQ(id, FlowStore::content_id(add));
    EXPECT_EQ(id.size(), 12u);
    EXPECT_EQ(store.put(add, "named"), "named");
  }
  FlowStore reopened(dir.path());
  EXPECT_EQ(reopened.find_flow(id), add);
  EXPECT_EQ(reopened.find_flow("named"), add);
  EXPECT_FALSE(reopened.find_flow("missing").has_value());
  auto ids = reopened.ids();
  EXPECT_NE(std::find(ids.begin(), ids.end(), "jit-codegen"), ids.end());
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "flows" / (id + ".flow.json")));
}

TEST(FlowStore, ContentIdIgnoresOrder) {
  auto a = testkit::fixture_flow("add.flow");
  auto b = a;
  std::reverse(b.modules.begin(), b.modules.end());
  EXPECT_EQ(FlowStore::content_id(a), FlowStore::content_id(b));
}

TEST(FlowStore, RejectsBadIds) {
  FlowStore store;
  EXPECT_THROW(store.put(testkit::fixture_flow("add.flow"), "../escape"), Error);
  EXPECT_THROW(store.put(testkit::fixture_flow("add.flow"), ""), Error);
  EXPECT_FALSE(FlowStore::valid_id("a/b"));
  EXPECT_TRUE(FlowStore::valid_id("my-flow_2"));
}

TEST(FlowFiles, DslAndJson) {
  script::Workdir dir;
  const auto add = testkit::fixture_flow("add.flow");
  save_flow_file(dir.path() / "a.flow", add);
  save_flow_file(dir.path() / "a.flow.json", add);
  EXPECT_EQ(load_flow_file(dir.path() / "a.flow"), add);
  EXPECT_EQ(load_flow_file(dir.path() / "a.flow.json"), add);
  write_file_atomic(dir.path() / "bad.flow", "flow {");
  try {
    load_flow_file(dir.path() / "bad.flow");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "dsl-parse");
  }
}

TEST(RunStore, LayoutAndRecords) {
  script::Workdir dir;
  RunStore store(dir.path());
  RunRecord rec;
  rec.run_id = "r1";
  rec.flow_id = "add";
  rec.started_at = iso8601(std::chrono::system_clock::now());
  store.create(rec, Json{{"x", 1}});
  TraceEvent e;
  e.event = EventKind::RunStarted;
  store.append_event("r1", e);
  e.event = EventKind::RunCompleted;
  e.ts = 5;
  store.append_event("r1", e);
  rec.state = RunState::Completed;
  rec.outputs = Json{{"sum", 3}};
  rec.finished_at = iso8601(std::chrono::system_clock::now());
  store.write_status(rec);

  for (const auto* f : {"input.json", "trace.jsonl", "outputs.json", "status.json"}) {
    EXPECT_TRUE(std::filesystem::exists(store.dir("r1") / f)) << f;
  }
  auto loaded = store.load("r1");
  ASSERT_TRUE(loaded.has_value());
  EXPECT_EQ(loaded->state, RunState::Completed);
  EXPECT_EQ(loaded->outputs, (Json{{"sum", 3}}));
  EXPECT_EQ(store.trace_lines("r1").size(), 2u);
  EXPECT_EQ(store.inputs("r1"), (Json{{"x", 1}}));
  EXPECT_EQ(store.run_ids(), std::vector<std::string>{"r1"});
  EXPECT_FALSE(store.load("nope").has_value());
  auto j = loaded->to_json();
  for (const auto* k : {"runId", "flowId", "state", "startedAt", "finishedAt", "outputs"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(RunRecord::from_json(j).to_json(), j);
}

TEST(Iso8601, Format) {
  auto s = iso8601(std::chrono::system_clock::time_point{});
  EXPECT_EQ(s.substr(0, 19), "1970-01-01T00:00:00");
  EXPECT_EQ(s.back(), 'Z');
}
