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

// Operator entry point: generate, validate, analyze, report, serve, export.
//
// Exit codes: 0 success, 1 validation/domain failure, 2 usage error,
// 3 external-service failure. Data goes to stdout, diagnostics to stderr.

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <pthread.h>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "connections/connections.hpp"

namespace fs = std::filesystem;
using namespace connections;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;
constexpr int kExitExternal = 3;

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::TransportError:
    case ErrorCode::ProviderUnavailable:
      return kExitExternal;
    case ErrorCode::InvalidArgument:
      return kExitUsage;
    default:
      return kExitDomain;
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// `key = value` lines, `#` comments.
std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::map<std::string, std::string> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

fs::path sidecar_path(const fs::path& puzzles) {
  auto p = puzzles;
  p += ".records.json";
  return p;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::string model;
  std::string prompt;
  int count = 1;
  fs::path out;
  std::string backend_url;
  std::string token_env = "LLM_API_TOKEN";
  std::optional<fs::path> mock_script;
  int max_attempts = 3;
  std::string sampling_json = "{}";
  bool json_output = false;
};

int run_generate(const GenerateArgs& a) {
  auto kind = prompt_kind_from_string(a.prompt);
  if (!kind) {
    std::cerr << "error: --prompt must be zero or role\n";
    return kExitUsage;
  }
  if (a.count < 1) {
    std::cerr << "error: --count must be >= 1\n";
    return kExitUsage;
  }

  GenerationConfig cfg;
  cfg.model_id = a.model;
  cfg.max_attempts = a.max_attempts;
  try {
    cfg.sampling = json::parse(a.sampling_json);
  } catch (const json::exception&) {
    std::cerr << "error: --sampling must be a JSON object\n";
    return kExitUsage;
  }
  if (!cfg.sampling.is_object()) {
    std::cerr << "error: --sampling must be a JSON object\n";
    return kExitUsage;
  }

  std::unique_ptr<ChatClient> client;
  if (a.mock_script) {
    auto script = json::parse(read_file(*a.mock_script));
    if (!script.is_array() || script.empty()) {
      std::cerr << "error: mock script must be a non-empty JSON array of strings\n";
      return kExitUsage;
    }
    client = std::make_unique<ScriptedChatClient>(script.get<std::vector<std::string>>(), true);
  } else if (!a.backend_url.empty()) {
    client = std::make_unique<HttpChatClient>(HttpChatConfig{a.backend_url, a.token_env});
  } else {
    std::cerr << "error: give --backend-url or --mock-script\n";
    return kExitUsage;
  }

  std::vector<Puzzle> puzzles;
  json records = json::array();
  auto write_outputs = [&](const fs::path& target) {
    write_text_file(target, serialize_document(puzzles));
    write_text_file(sidecar_path(target), records.dump(2) + "\n");
  };

  for (int i = 0; i < a.count; ++i) {
    try {
      auto result = generate_puzzle(*client, *kind, cfg);
      puzzles.push_back(result.puzzle);
      records.push_back(result.record.to_json());
      std::cerr << "puzzle " << (i + 1) << "/" << a.count << ": ok after "
                << result.record.attempts_used << " attempt(s)\n";
    } catch (const GenerationFailed& e) {
      records.push_back(e.record().to_json());
      std::cerr << "error: " << e.what() << "\n";
      for (const auto& r : e.record().failure_reasons) std::cerr << "  " << r << "\n";
      if (!puzzles.empty()) {
        auto partial = a.out;
        partial += ".partial";
        write_outputs(partial);
        std::cerr << "partial output kept in " << partial << "\n";
      }
      return kExitDomain;
    }
  }
  write_outputs(a.out);
  if (a.json_output) {
    std::cout << json{{"out", a.out.string()}, {"count", puzzles.size()}}.dump() << "\n";
  } else {
    std::cout << "wrote " << puzzles.size() << " puzzle(s) to " << a.out.string() << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// validate

int run_validate(const fs::path& file, bool json_output) {
  std::vector<Puzzle> puzzles;
  try {
    puzzles = read_puzzle_document_unchecked(read_file(file));
  } catch (const Error& e) {
    if (json_output) {
      std::cout << json{{"file", file.string()}, {"ok", false}, {"error", to_string(e.code())},
                        {"message", e.what()}}.dump()
                << "\n";
    } else {
      std::cout << file.string() << ": " << e.what() << "\n";
    }
    return kExitDomain;
  }

  bool all_ok = !puzzles.empty();
  json reports = json::array();
  for (std::size_t i = 0; i < puzzles.size(); ++i) {
    auto report = validate(puzzles[i]);
    all_ok = all_ok && report.ok();
    json violations = json::array();
    for (const auto& v : report.violations) violations.push_back(v.describe());
    reports.push_back({{"index", i}, {"ok", report.ok()}, {"violations", violations}});
    if (!json_output) {
      std::cout << "puzzle " << (i + 1) << ": " << (report.ok() ? "ok" : "invalid") << "\n";
      for (const auto& v : report.violations) std::cout << "  " << v.describe() << "\n";
    }
  }
  if (json_output) {
    std::cout << json{{"file", file.string()}, {"ok", all_ok}, {"puzzles", reports}}.dump() << "\n";
  } else if (puzzles.empty()) {
    std::cout << file.string() << ": no puzzles\n";
  }
  return all_ok ? kExitOk : kExitDomain;
}

// ---------------------------------------------------------------------------
// analyze

std::vector<PuzzleProvenance> provenance_for(const fs::path& file, std::size_t n,
                                             const std::optional<PuzzleProvenance>& forced) {
  if (forced) return std::vector<PuzzleProvenance>(n, *forced);
  auto side = sidecar_path(file);
  std::vector<PuzzleProvenance> out(n, PuzzleProvenance::human());
  if (!fs::exists(side)) {
    // Fall back to the pool layout: <condition>/<model>.json.
    auto dir = condition_from_string(fs::absolute(file).parent_path().filename().string());
    if (dir && *dir != Condition::RealGame) {
      auto kind = *dir == Condition::ZeroShot ? PromptKind::ZeroShot : PromptKind::RoleInjected;
      std::fill(out.begin(), out.end(), PuzzleProvenance::model(kind, file.stem().string()));
    }
    return out;
  }
  auto recs = json::parse(read_file(side));
  std::size_t i = 0;
  for (const auto& r : recs) {
    if (r.value("outcome", "") != "puzzle") continue;
    if (i >= n) break;
    auto kind = prompt_kind_from_string(r.at("prompt_kind").get<std::string>());
    if (!kind) throw Error(ErrorCode::InvalidArgument, "bad prompt_kind in " + side.string());
    out[i++] = PuzzleProvenance::model(*kind, r.at("model_id").get<std::string>());
  }
  return out;
}

struct AnalyzeArgs {
  std::vector<fs::path> files;
  fs::path provider_cfg;
  fs::path out;
  std::optional<fs::path> cache;
  std::string model;
  std::string condition;
  bool json_output = false;
};

int run_analyze(const AnalyzeArgs& a) {
  auto cfg = EmbeddingProviderConfig::parse(read_file(a.provider_cfg));
  auto provider = make_provider(cfg);

  std::optional<PuzzleProvenance> forced;
  if (!a.condition.empty()) {
    auto cond = condition_from_string(a.condition);
    if (!cond) {
      std::cerr << "error: --condition must be zero, role or human\n";
      return kExitUsage;
    }
    if (*cond == Condition::RealGame) {
      forced = PuzzleProvenance::human();
    } else {
      forced = PuzzleProvenance::model(
          *cond == Condition::ZeroShot ? PromptKind::ZeroShot : PromptKind::RoleInjected,
          a.model.empty() ? "unknown" : a.model);
    }
  }

  std::vector<Puzzle> puzzles;
  for (const auto& f : a.files) {
    auto parsed = parse_puzzle_document(read_file(f));
    auto prov = provenance_for(f, parsed.size(), forced);
    for (std::size_t i = 0; i < parsed.size(); ++i) {
      parsed[i].provenance = prov[i];
      puzzles.push_back(std::move(parsed[i]));
    }
  }
  if (puzzles.empty()) throw Error(ErrorCode::EmptyCorpus, "no puzzles in input");

  EmbeddingCache cache(provider->fingerprint());
  if (a.cache && fs::exists(*a.cache)) cache = cache_load(*a.cache, provider->fingerprint());

  std::vector<Word> words;
  for (const auto& p : puzzles)
    for (const auto& c : p.categories)
      for (const auto& w : c.words) words.push_back(w);
  auto embeddings = embed_words(*provider, words, &cache);
  if (a.cache) cache_store(cache, *a.cache);

  std::vector<TaggedMetrics> tagged;
  for (const auto& p : puzzles) tagged.push_back({puzzle_id(p), p.provenance, compute_metrics(p, embeddings)});
  auto corpus = corpus_report(tagged);

  json per = json::array();
  for (const auto& t : tagged) per.push_back(to_json(t));
  auto fp = provider->fingerprint();
  json doc{{"embedding", {{"model_name", fp.model_name}, {"dim", fp.dim}, {"pooling", fp.pooling}}},
           {"puzzles", per},
           {"corpus", to_json(corpus)}};
  write_text_file(a.out, doc.dump(2) + "\n");

  if (a.json_output) {
    std::cout << to_json(corpus).dump() << "\n";
  } else {
    std::cout << render_table(corpus);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report

int run_report(const std::vector<fs::path>& metrics, const std::vector<fs::path>& study, bool json_output) {
  if (metrics.empty() == study.empty()) {
    std::cerr << "error: give exactly one of --metrics or --study\n";
    return kExitUsage;
  }
  if (!metrics.empty()) {
    std::vector<TaggedMetrics> tagged;
    for (const auto& f : metrics) {
      auto doc = json::parse(read_file(f));
      for (const auto& p : doc.at("puzzles")) {
        auto cond = condition_from_string(p.at("prompt_type").get<std::string>());
        if (!cond) throw Error(ErrorCode::InvalidArgument, "bad prompt_type in " + f.string());
        PuzzleProvenance prov;
        if (*cond != Condition::RealGame) {
          prov = PuzzleProvenance::model(
              *cond == Condition::ZeroShot ? PromptKind::ZeroShot : PromptKind::RoleInjected,
              p.at("model").get<std::string>());
        }
        PuzzleMetrics m;
        m.category_cohesion = p.at("category_cohesion").get<std::vector<double>>();
        m.cohesion = p.at("cohesion").get<double>();
        m.ambiguity = p.at("ambiguity").get<double>();
        m.within_pairs = p.at("within_pairs").get<std::size_t>();
        m.across_pairs = p.at("across_pairs").get<std::size_t>();
        tagged.push_back({p.at("puzzle_id").get<std::string>(), prov, m});
      }
    }
    auto corpus = corpus_report(tagged);
    if (json_output) {
      std::cout << to_json(corpus).dump(2) << "\n";
    } else {
      std::cout << render_table(corpus);
    }
    return kExitOk;
  }

  std::vector<SessionRecord> records;
  for (const auto& f : study) {
    auto part = RecordStore::read_records(f);
    records.insert(records.end(), part.begin(), part.end());
  }
  auto agg = aggregate(records);
  if (json_output) {
    std::cout << to_json(agg).dump(2) << "\n";
  } else {
    std::cout << render_study_report(agg);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// serve

struct ServeArgs {
  std::string listen = "127.0.0.1:8080";
  fs::path pool;
  fs::path records;
  std::optional<fs::path> metrics;
  std::vector<std::string> cors;
  int mistake_budget = 4;
  bool no_one_away = false;
  int idle_minutes = 60;
};

int run_serve(const ServeArgs& a) {
  auto colon = a.listen.rfind(':');
  if (colon == std::string::npos) {
    std::cerr << "error: --listen expects host:port\n";
    return kExitUsage;
  }
  ServerConfig cfg;
  cfg.host = a.listen.substr(0, colon);
  try {
    cfg.port = std::stoi(a.listen.substr(colon + 1));
  } catch (const std::exception&) {
    std::cerr << "error: bad port in --listen\n";
    return kExitUsage;
  }
  cfg.records_path = a.records;
  cfg.metrics_path = a.metrics;
  cfg.cors_allowlist = a.cors;
  cfg.session_config.mistake_budget = a.mistake_budget;
  cfg.session_config.one_away_feedback = !a.no_one_away;
  cfg.idle_timeout = std::chrono::minutes(a.idle_minutes);

  auto pool = PuzzlePool::load_directory(a.pool);
  if (pool.empty()) std::cerr << "warning: puzzle pool " << a.pool << " is empty\n";

  // Signals are consumed by a dedicated thread; server threads inherit the mask.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  StudyServer server(cfg, std::move(pool));
  int port = server.bind();
  std::cerr << "listening on " << cfg.host << ":" << port << "\n";
  std::cout << json{{"listen", cfg.host + ":" + std::to_string(port)}}.dump() << std::endl;

  std::thread waiter([&server, set] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  server.serve();
  if (waiter.joinable()) {
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Connections puzzle workbench: generation, metrics, and study sessions"};
  app.require_subcommand(1);
  bool json_output = false;
  app.add_flag("--json", json_output, "Machine-readable output on stdout");
  std::optional<fs::path> config_file;
  app.add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Generate puzzles with an LLM backend");
  generate->add_option("--model", gen.model, "Model id")->required();
  generate->add_option("--prompt", gen.prompt, "zero | role")->required()->check(CLI::IsMember({"zero", "role"}));
  generate->add_option("--count", gen.count, "Number of puzzles")->default_val(1);
  generate->add_option("--out", gen.out, "Output puzzle file")->required();
  generate->add_option("--backend-url", gen.backend_url, "Chat-completion base URL");
  generate->add_option("--token-env", gen.token_env, "Env var holding the API token");
  generate->add_option("--mock-script", gen.mock_script, "JSON array of scripted responses")
      ->check(CLI::ExistingFile);
  generate->add_option("--max-attempts", gen.max_attempts, "Attempts per puzzle")->default_val(3);
  generate->add_option("--sampling", gen.sampling_json, "JSON object passed to the backend");

  fs::path validate_file;
  auto* validate_cmd = app.add_subcommand("validate", "Check puzzle files");
  validate_cmd->add_option("file", validate_file)->required()->check(CLI::ExistingFile);

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "Compute cohesion and ambiguity");
  analyze->add_option("files", an.files)->required()->check(CLI::ExistingFile);
  analyze->add_option("--provider", an.provider_cfg, "Embedding provider config")->required()->check(CLI::ExistingFile);
  analyze->add_option("--out", an.out, "metrics.json path")->required();
  analyze->add_option("--cache", an.cache, "Embedding cache file");
  analyze->add_option("--condition", an.condition, "Override: zero | role | human");
  analyze->add_option("--model", an.model, "Model id used with --condition");

  std::vector<fs::path> report_metrics, report_study;
  auto* report = app.add_subcommand("report", "Render a metrics table or study summary");
  report->add_option("--metrics", report_metrics, "analyze outputs")->check(CLI::ExistingFile);
  report->add_option("--study", report_study, "record files")->check(CLI::ExistingFile);

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "Run the study HTTP API");
  serve->add_option("--listen", sv.listen, "host:port")->default_val("127.0.0.1:8080");
  serve->add_option("--pool", sv.pool, "Puzzle pool directory")->required()->check(CLI::ExistingDirectory);
  serve->add_option("--records", sv.records, "Record file (JSON lines)")->required();
  serve->add_option("--metrics", sv.metrics, "analyze output served at /report/metrics")->check(CLI::ExistingFile);
  serve->add_option("--cors", sv.cors, "Allowed browser origin (repeatable)");
  serve->add_option("--mistake-budget", sv.mistake_budget)->default_val(4)->check(CLI::Range(0, 16));
  serve->add_flag("--no-one-away", sv.no_one_away, "Disable one-away feedback");
  serve->add_option("--idle-minutes", sv.idle_minutes)->default_val(60)->check(CLI::PositiveNumber);

  fs::path export_records_path;
  std::string export_format = "csv";
  bool export_aggregate_flag = false;
  std::optional<fs::path> export_out;
  auto* export_cmd = app.add_subcommand("export", "Export study records or their aggregate");
  export_cmd->add_option("--records", export_records_path)->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--format", export_format)->check(CLI::IsMember({"csv", "json"}));
  export_cmd->add_flag("--aggregate", export_aggregate_flag, "Export per-condition statistics");
  export_cmd->add_option("--out", export_out, "Write to a file instead of stdout");

  fs::path import_csv, import_records;
  auto* import_cmd = app.add_subcommand("import", "Append records from an exported CSV");
  import_cmd->add_option("--csv", import_csv)->required()->check(CLI::ExistingFile);
  import_cmd->add_option("--records", import_records)->required();

  std::string prompt_kind;
  auto* prompt_cmd = app.add_subcommand("prompt", "Print a generation prompt");
  prompt_cmd->add_option("kind", prompt_kind)->required()->check(CLI::IsMember({"zero", "role"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (config_file) {
      auto kv = read_key_values(*config_file);
      if (gen.backend_url.empty() && kv.count("backend_url")) gen.backend_url = kv["backend_url"];
      if (kv.count("token_env") && generate->count("--token-env") == 0) gen.token_env = kv["token_env"];
      if (kv.count("max_attempts") && generate->count("--max-attempts") == 0) {
        gen.max_attempts = std::stoi(kv["max_attempts"]);
      }
    }
    gen.json_output = json_output;
    an.json_output = json_output;

    if (*generate) return run_generate(gen);
    if (*validate_cmd) return run_validate(validate_file, json_output);
    if (*analyze) return run_analyze(an);
    if (*report) return run_report(report_metrics, report_study, json_output);
    if (*serve) return run_serve(sv);
    if (*export_cmd) {
      auto records = RecordStore::read_records(export_records_path);
      auto fmt = export_format == "csv" ? ExportFormat::Csv : ExportFormat::Json;
      auto text = export_aggregate_flag ? export_aggregate(aggregate(records), fmt) : export_records(records, fmt);
      if (export_out) {
        write_text_file(*export_out, text);
      } else {
        std::cout << text;
      }
      return kExitOk;
    }
    if (*import_cmd) {
      auto records = records_from_csv(read_file(import_csv));
      RecordStore store(import_records);
      for (const auto& r : records) store.append(r);
      std::cerr << "imported " << records.size() << " record(s)\n";
      return kExitOk;
    }
    if (*prompt_cmd) {
      std::cout << render_prompt(*prompt_kind_from_string(prompt_kind));
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return kExitUsage;
}
