// Copyright 2026 The Connections Workbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <thread>

#include "test_support.hpp"

extern char** environ;

using namespace connections;
using Json = nlohmann::json;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'') q += "'\\''";
    else q += c;
  }
  return q + "'";
}

RunResult run(const std::vector<std::string>& args) {
  static int counter = 0;
  auto err_path = std::filesystem::temp_directory_path() /
                  ("connections-cli-err-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::string cmd = quote(CONNECTIONS_CLI_PATH);
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " 2>" + quote(err_path.string());
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = testsupport::read_file(err_path);
  std::filesystem::remove(err_path);
  return r;
}

std::string fenced(const std::string& fixture_json) { return "Here you go:\n```json\n" + fixture_json + "\n```\n"; }

std::string first_fixture_text() { return canonical_serialize(testsupport::zero_shot_fixture().front()); }

/// Child process with its stdout on a pipe, terminated on destruction.
class Child {
 public:
  explicit Child(const std::vector<std::string>& args) {
    int fds[2];
    if (::pipe(fds) != 0) return;
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_adddup2(&fa, fds[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&fa, fds[0]);
    posix_spawn_file_actions_addopen(&fa, STDERR_FILENO, "/dev/null", O_WRONLY, 0);
    std::vector<std::string> storage{CONNECTIONS_CLI_PATH};
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    argv.push_back(nullptr);
    if (posix_spawn(&pid_, CONNECTIONS_CLI_PATH, &fa, nullptr, argv.data(), environ) != 0) pid_ = -1;
    posix_spawn_file_actions_destroy(&fa);
    ::close(fds[1]);
    out_ = ::fdopen(fds[0], "r");
  }
  ~Child() {
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
    }
    if (out_) std::fclose(out_);
  }

  std::string read_line() {
    std::string line;
    for (int c; out_ && (c = std::fgetc(out_)) != EOF && c != '\n';) line += static_cast<char>(c);
    return line;
  }

  int terminate() {
    ::kill(pid_, SIGTERM);
    int status = 0;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  int wait() {
    int status = 0;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

 private:
  pid_t pid_ = -1;
  FILE* out_ = nullptr;
};

}  // namespace

TEST(CliTest, GenerateWithMockBackend) {
  testsupport::TempDir dir;
  std::ofstream(dir / "script.json") << Json::array({fenced(first_fixture_text())}).dump();
  auto r = run({"generate", "--model", "mock", "--prompt", "zero", "--count", "1", "--out",
                (dir / "out.json").string(), "--mock-script", (dir / "script.json").string()});
  EXPECT_EQ(r.exit_code, 0) << r.err;
  auto puzzles = parse_puzzle_document(testsupport::read_file(dir / "out.json"));
  ASSERT_EQ(puzzles.size(), 1u);
  EXPECT_TRUE(puzzles[0].same_content(testsupport::zero_shot_fixture().front()));

  auto records = Json::parse(testsupport::read_file(dir / "out.json.records.json"));
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0]["outcome"], "puzzle");
  EXPECT_EQ(records[0]["prompt_kind"], "zero_shot");
  EXPECT_EQ(records[0]["model_id"], "mock");
}

TEST(CliTest, GenerateAlwaysInvalidFails) {
  testsupport::TempDir dir;
  std::ofstream(dir / "script.json") << Json::array({"no puzzle here", R"({"Only": ["a","b","c","d"]})"}).dump();
  auto r = run({"generate", "--model", "mock", "--prompt", "zero", "--count", "2", "--out",
                (dir / "out.json").string(), "--mock-script", (dir / "script.json").string()});
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_FALSE(std::filesystem::exists(dir / "out.json"));
  EXPECT_FALSE(std::filesystem::exists(dir / "out.json.partial"));
  EXPECT_NE(r.err.find("NoJsonFound"), std::string::npos) << r.err;
}

TEST(CliTest, GeneratePartialOutputKept) {
  testsupport::TempDir dir;
  std::ofstream(dir / "script.json") << Json::array({first_fixture_text(), "garbage"}).dump();
  auto r = run({"generate", "--model", "mock", "--prompt", "zero", "--count", "3", "--out",
                (dir / "out.json").string(), "--mock-script", (dir / "script.json").string()});
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_FALSE(std::filesystem::exists(dir / "out.json"));
  ASSERT_TRUE(std::filesystem::exists(dir / "out.json.partial"));
  EXPECT_EQ(parse_puzzle_document(testsupport::read_file(dir / "out.json.partial")).size(), 1u);
}

TEST(CliTest, GenerateRoleSendsRolePromptOverHttp) {
  httplib::Server backend;
  std::vector<Json> transcript;
  std::mutex mu;
  backend.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu);
    transcript.push_back(Json::parse(req.body));
    Json reply{{"choices", {{{"message", {{"role", "assistant"}, {"content", fenced(first_fixture_text())}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  int port = backend.bind_to_any_port("127.0.0.1");
  std::thread t([&] { backend.listen_after_bind(); });
  backend.wait_until_ready();

  testsupport::TempDir dir;
  ::setenv("CONNECTIONS_TEST_TOKEN", "secret-token", 1);
  auto r = run({"generate", "--model", "gpt-4o", "--prompt", "role", "--count", "2", "--out",
                (dir / "out.json").string(), "--backend-url", "http://127.0.0.1:" + std::to_string(port),
                "--token-env", "CONNECTIONS_TEST_TOKEN", "--sampling", R"({"temperature":0.7})"});
  backend.stop();
  t.join();
  EXPECT_EQ(r.exit_code, 0) << r.err;
  ASSERT_EQ(transcript.size(), 2u);
  for (const auto& req : transcript) {
    EXPECT_EQ(req["model"], "gpt-4o");
    EXPECT_EQ(req["temperature"], 0.7);
    EXPECT_EQ(req["messages"][0]["content"], std::string(render_prompt(PromptKind::RoleInjected)));
  }
  EXPECT_EQ(testsupport::sha256_hex(transcript[0]["messages"][0]["content"].get<std::string>()),
            testsupport::checked_in_hash("role_injected.txt"));
}

TEST(CliTest, GenerateUnreachableBackendIsExternalFailure) {
  testsupport::TempDir dir;
  auto r = run({"generate", "--model", "m", "--prompt", "zero", "--out", (dir / "out.json").string(),
                "--backend-url", "http://127.0.0.1:1"});
  EXPECT_EQ(r.exit_code, 3) << r.err;
}

TEST(CliTest, PromptCommandPrintsAsset) {
  auto r = run({"prompt", "zero"});
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(testsupport::sha256_hex(r.out), testsupport::checked_in_hash("zero_shot.txt"));
}

TEST(CliTest, ValidateFixture) {
  auto r = run({"validate", testsupport::fixture("zero_shot_samples.json").string()});
  EXPECT_EQ(r.exit_code, 0) << r.out;
  auto j = run({"--json", "validate", testsupport::fixture("role_injected_samples.json").string()});
  EXPECT_EQ(j.exit_code, 0);
  auto body = Json::parse(j.out);
  EXPECT_EQ(body["ok"], true);
  EXPECT_EQ(body["puzzles"].size(), 4u);
}

TEST(CliTest, ValidateFifteenWords) {
  testsupport::TempDir dir;
  std::ofstream(dir / "bad.json") << R"({
    "Card Games": ["Bridge", "Solitaire", "Poker", "Hearts"],
    "Water Bodies": ["Lake", "River", "Ocean", "Pond"],
    "Footwear": ["Boot", "Sneaker", "Sandal", "Slipper"],
    "Metals": ["Copper", "Iron", "Silver"]
  })";
  auto r = run({"validate", (dir / "bad.json").string()});
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.out.find("WrongWordCount"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("Metals"), std::string::npos) << r.out;

  std::ofstream(dir / "broken.json") << "{ not json";
  auto b = run({"validate", (dir / "broken.json").string()});
  EXPECT_EQ(b.exit_code, 1);
}

TEST(CliTest, AnalyzeIsDeterministic) {
  testsupport::TempDir dir;
  std::ofstream(dir / "provider.cfg") << "provider = test\nseed = 7\ndim = 8\n";
  auto args = [&](const std::string& out) {
    return std::vector<std::string>{"analyze", testsupport::fixture("zero_shot_samples.json").string(), "--provider",
                                    (dir / "provider.cfg").string(), "--out", out, "--condition", "zero",
                                    "--model", "GPT-4o"};
  };
  auto a = run(args((dir / "m1.json").string()));
  auto b = run(args((dir / "m2.json").string()));
  ASSERT_EQ(a.exit_code, 0) << a.err;
  ASSERT_EQ(b.exit_code, 0) << b.err;
  auto m1 = testsupport::read_file(dir / "m1.json");
  EXPECT_FALSE(m1.empty());
  EXPECT_EQ(m1, testsupport::read_file(dir / "m2.json"));
  EXPECT_EQ(a.out, b.out);

  auto doc = Json::parse(m1);
  EXPECT_EQ(doc["puzzles"].size(), 4u);
  ASSERT_EQ(doc["corpus"]["rows"].size(), 1u);
  EXPECT_EQ(doc["corpus"]["rows"][0]["model"], "GPT-4o");
  EXPECT_EQ(doc["corpus"]["rows"][0]["prompt_type"], "zero_shot");

  // Cross-check one puzzle against the in-process pipeline.
  auto p = testsupport::zero_shot_fixture().front();
  auto m = compute_metrics(p, testsupport::test_embeddings(p, 7, 8));
  EXPECT_NEAR(doc["puzzles"][0]["cohesion"].get<double>(), m.cohesion, 1e-12);
  EXPECT_NEAR(doc["puzzles"][0]["ambiguity"].get<double>(), m.ambiguity, 1e-12);

  auto table = run({"report", "--metrics", (dir / "m1.json").string()});
  EXPECT_EQ(table.exit_code, 0);
  EXPECT_NE(table.out.find("Avg Cohesion"), std::string::npos);
}

TEST(CliTest, AnalyzeTakesProvenanceFromPoolLayout) {
  testsupport::TempDir dir;
  std::filesystem::create_directories(dir / "role_injected");
  std::filesystem::copy_file(testsupport::fixture("role_injected_samples.json"), dir / "role_injected" / "GPT-4o.json");
  std::ofstream(dir / "provider.cfg") << "provider = test\nseed = 7\ndim = 8\n";
  auto r = run({"--json", "analyze", (dir / "role_injected" / "GPT-4o.json").string(),
                testsupport::fixture("zero_shot_samples.json").string(), "--provider", (dir / "provider.cfg").string(),
                "--out", (dir / "m.json").string()});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  auto rows = Json::parse(r.out)["rows"];
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0]["model"], "GPT-4o");
  EXPECT_EQ(rows[0]["prompt_type"], "role_injected");
  EXPECT_EQ(rows[1]["model"], "Official Games");
  EXPECT_EQ(rows[1]["prompt_type"], "real_game");
}

TEST(CliTest, AnalyzeWithCacheSkipsProvider) {
  testsupport::TempDir dir;
  std::ofstream(dir / "provider.cfg") << "provider = test\nseed = 7\ndim = 8\n";
  auto args = std::vector<std::string>{"analyze", testsupport::fixture("role_injected_samples.json").string(), "--provider",
                                       (dir / "provider.cfg").string(), "--out", (dir / "m.json").string(),
                                       "--cache", (dir / "cache.json").string()};
  ASSERT_EQ(run(args).exit_code, 0);
  auto cache = cache_load(dir / "cache.json");
  EXPECT_EQ(cache.size(), 64u);
  auto first = testsupport::read_file(dir / "m.json");
  ASSERT_EQ(run(args).exit_code, 0);
  EXPECT_EQ(testsupport::read_file(dir / "m.json"), first);
}

TEST(CliTest, ExportEmptyRecordFile) {
  testsupport::TempDir dir;
  std::ofstream(dir / "records.jsonl").close();
  auto r = run({"export", "--records", (dir / "records.jsonl").string(), "--format", "csv"});
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.out, std::string(kRecordCsvHeader) + "\n");
}

TEST(CliTest, ExportImportRoundTrip) {
  testsupport::TempDir dir;
  auto corpus = testsupport::synthetic_study_corpus();
  corpus.resize(120);
  corpus[5].rating.reset();
  {
    RecordStore store(dir / "records.jsonl");
    for (const auto& r : corpus) store.append(r);
  }
  auto out = run({"export", "--records", (dir / "records.jsonl").string(), "--format", "csv", "--out",
                  (dir / "export.csv").string()});
  ASSERT_EQ(out.exit_code, 0);
  auto in = run({"import", "--csv", (dir / "export.csv").string(), "--records", (dir / "copy.jsonl").string()});
  ASSERT_EQ(in.exit_code, 0) << in.err;
  auto back = RecordStore::read_records(dir / "copy.jsonl");
  ASSERT_EQ(back.size(), corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) EXPECT_EQ(to_json(back[i]), to_json(corpus[i]));

  auto again = run({"import", "--csv", (dir / "export.csv").string(), "--records", (dir / "copy.jsonl").string()});
  EXPECT_EQ(again.exit_code, 1);  // duplicate records

  auto agg = run({"export", "--records", (dir / "records.jsonl").string(), "--format", "json", "--aggregate"});
  EXPECT_EQ(Json::parse(agg.out), to_json(aggregate(corpus)));
}

TEST(CliTest, StudyReport) {
  testsupport::TempDir dir;
  {
    RecordStore store(dir / "records.jsonl");
    for (const auto& r : testsupport::synthetic_study_corpus()) store.append(r);
  }
  auto text = run({"report", "--study", (dir / "records.jsonl").string()});
  EXPECT_EQ(text.exit_code, 0);
  EXPECT_NE(text.out.find("Role-Injected  6.95"), std::string::npos) << text.out;
  auto json = run({"--json", "report", "--study", (dir / "records.jsonl").string()});
  EXPECT_EQ(Json::parse(json.out), to_json(aggregate(testsupport::synthetic_study_corpus())));
}

TEST(CliTest, UsageErrors) {
  EXPECT_EQ(run({}).exit_code, 2);
  EXPECT_EQ(run({"frobnicate"}).exit_code, 2);
  EXPECT_EQ(run({"generate", "--model", "m", "--prompt", "sideways", "--out", "/tmp/x.json"}).exit_code, 2);
  EXPECT_EQ(run({"generate", "--model", "m", "--prompt", "zero", "--out", "/tmp/x.json"}).exit_code, 2);
  EXPECT_EQ(run({"validate", "/nonexistent/file.json"}).exit_code, 2);
  EXPECT_EQ(run({"report"}).exit_code, 2);
  EXPECT_EQ(run({"--help"}).exit_code, 0);
}

TEST(CliTest, ServeSmoke) {
  testsupport::TempDir dir;
  std::filesystem::create_directories(dir / "pool" / "zero_shot");
  std::filesystem::copy_file(testsupport::fixture("zero_shot_samples.json"), dir / "pool" / "zero_shot" / "GPT-4o.json");
  Child server({"serve", "--listen", "127.0.0.1:0", "--pool", (dir / "pool").string(), "--records",
                (dir / "records.jsonl").string()});
  auto line = server.read_line();
  ASSERT_FALSE(line.empty());
  auto listen = Json::parse(line)["listen"].get<std::string>();
  int port = std::stoi(listen.substr(listen.rfind(':') + 1));

  httplib::Client c("127.0.0.1", port);
  auto r = c.Post("/sessions", R"({"participant_id":"p","condition":"zero_shot"})", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  auto id = Json::parse(r->body)["session_id"].get<std::string>();
  EXPECT_EQ(c.Post("/sessions/" + id + "/abandon", "", "application/json")->status, 200);

  // A second server on the same port must fail cleanly.
  auto clash = run({"serve", "--listen", "127.0.0.1:" + std::to_string(port), "--pool", (dir / "pool").string(),
                    "--records", (dir / "other.jsonl").string()});
  EXPECT_NE(clash.exit_code, 0);

  EXPECT_EQ(server.terminate(), 0);
  EXPECT_EQ(RecordStore::read_records(dir / "records.jsonl").size(), 1u);
}
