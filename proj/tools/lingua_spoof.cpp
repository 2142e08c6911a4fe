#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "lingua_spoof.hpp"

namespace ls = lingua_spoof;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Writes to the named file, or stdout for "" and "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) ls::fail(ls::ErrorCode::IoError, "cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

std::vector<ls::TraceEntry> read_traces(const std::vector<std::string>& paths) {
  std::vector<ls::TraceEntry> all;
  for (const auto& p : paths) {
    auto e = ls::read_trace(p);
    std::move(e.begin(), e.end(), std::back_inserter(all));
  }
  return all;
}

struct Session {
  ls::RunManifest manifest;
  ls::OracleSet oracles;
  std::shared_ptr<ls::ResponseCache> cache;
  std::unique_ptr<ls::Gateway> gateway;
};

Session open_session(const std::string& manifest_path) {
  Session s;
  s.manifest = ls::load_manifest(manifest_path);
  s.oracles = ls::build_oracles(s.manifest.oracles);
  s.cache = ls::make_cache(s.manifest);
  s.gateway = std::make_unique<ls::Gateway>(s.oracles, s.cache);
  return s;
}

int cmd_attack(const std::string& manifest_path, std::optional<std::size_t> workers) {
  const auto m = ls::load_manifest(manifest_path);
  ls::CampaignOptions opts;
  opts.workers = workers;
  const auto r = ls::run_attack_campaign(m, opts);
  ls::write_campaign_outputs(r, m);
  std::size_t skipped = 0;
  for (const auto& s : r.samples) skipped += s.outcome ? 0 : 1;
  std::cout << ls::metrics_text(r);
  std::cerr << r.samples.size() << " samples, " << skipped << " skipped, " << r.skip_log.size()
            << " filtered; outputs in " << m.output_dir.string() << "\n";
  return kExitOk;
}

int cmd_metrics(const std::vector<std::string>& traces, const std::string& out) {
  const auto entries = read_traces(traces);
  Output o(out);
  for (const auto& row : ls::result_rows(entries)) {
    auto j = ls::metrics_to_json(row.metrics);
    j["detector"] = row.detector;
    j["voice"] = row.voice;
    j["strategy"] = row.strategy;
    o.stream() << j.dump() << "\n";
  }
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& traces, const std::string& format, const std::string& out) {
  const auto fmt = ls::report_format_from_string(format);
  const auto rows = ls::result_rows(read_traces(traces));
  Output o(out);
  ls::emit_report(rows, fmt, o.stream());
  return kExitOk;
}

int cmd_features(const std::vector<std::string>& traces, const std::string& manifest_path,
                 const std::string& out, std::optional<std::size_t> workers) {
  auto s = open_session(manifest_path);
  const auto familiar = ls::FamiliarWords::from_file(s.manifest.familiar_words);
  const auto entries = read_traces(traces);
  auto f = ls::trace_features(entries, *s.gateway, familiar, s.manifest.detector_report,
                              workers.value_or(s.manifest.workers));
  for (const auto& e : f.errors) std::cerr << e << "\n";
  Output o(out);
  ls::write_features_csv(f.rows, o.stream());
  return kExitOk;
}

int cmd_audit(const std::vector<std::string>& traces, const std::string& manifest_path) {
  auto s = open_session(manifest_path);
  std::optional<ls::Lexicon> lexicon;
  if (std::filesystem::exists(s.manifest.wordnet_dir)) lexicon = ls::load_lexicon_dir(s.manifest.wordnet_dir);
  const auto entries = read_traces(traces);
  const auto report = ls::audit_trace(entries, *s.gateway, lexicon ? &*lexicon : nullptr);
  for (const auto& f : report.findings) std::cout << "FAIL\t" << f.id << "\t" << f.problem << "\n";
  std::cout << report.passed << "/" << report.checked << " perturbed outcomes pass\n";
  return report.findings.empty() ? kExitOk : kExitRuntime;
}

int cmd_analyze(const std::vector<std::string>& paths, double vif_cutoff, const std::string& format,
                const std::string& proxy_out, const std::string& out) {
  std::vector<ls::FeatureRow> rows;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) ls::fail(ls::ErrorCode::IoError, "cannot open " + p);
    auto r = ls::read_features_csv(in, p);
    std::move(r.begin(), r.end(), std::back_inserter(rows));
  }
  if (format != "md" && format != "csv") ls::fail(ls::ErrorCode::InvalidArgument, "format must be md or csv");
  const auto fit = ls::vif_screened_fit(ls::design_from_features(rows), vif_cutoff);
  const auto tests = ls::feature_t_tests(rows);
  Output o(out);
  auto& os = o.stream();
  if (format == "csv") {
    ls::write_summary_csv(fit.summary, os);
  } else {
    os << "## Logistic regression (n=" << rows.size() << ")\n\n";
    ls::write_summary_markdown(fit.summary, os);
    os << "\nconverged: " << (fit.summary.converged ? "yes" : "no") << ", iterations "
       << fit.summary.iterations << ", log-likelihood " << ls::fixed(fit.summary.log_likelihood, 4);
    if (fit.summary.quasi_separation) os << ", quasi-separation";
    os << "\n";
    auto list = [](const std::vector<std::string>& v) {
      std::string s;
      for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
      return s.empty() ? std::string("none") : s;
    };
    os << "dropped (constant): " << list(fit.summary.dropped_constant) << "\n";
    os << "dropped (VIF > " << ls::fixed(vif_cutoff, 1) << "): " << list(fit.summary.dropped_for_vif) << "\n";
    os << "\n## VIF\n\n| Feature | VIF |\n|---|---:|\n";
    for (const auto& [name, v] : fit.final_vif) os << "| " << name << " | " << ls::fixed(v, 3) << " |\n";
    os << "\n## Welch t-tests (bona-fide minus spoof)\n\n| Feature | delta | t | p(one-sided) |\n|---|---:|---:|---:|\n";
    for (const auto& t : tests) {
      os << "| " << t.feature << " | " << ls::fixed(t.result.delta, 4) << " | " << ls::fixed(t.result.t, 3)
         << " | " << ls::fixed(t.result.p_one_sided, 3) << " |\n";
    }
  }
  if (!proxy_out.empty()) ls::write_text_file(proxy_out, ls::proxy_model_json(fit).dump(2) + "\n");
  return kExitOk;
}

ls::OracleServer* g_server = nullptr;

int cmd_stub_serve(std::uint64_t seed, int port, const std::string& host, const std::string& token) {
  ls::OracleServer server(std::make_shared<ls::StubBackend>(seed), token);
  const int bound = server.bind(host, port);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server != nullptr) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server != nullptr) g_server->stop();
  });
  std::cout << "listening on http://" << host << ":" << bound << std::endl;
  server.listen_blocking();
  g_server = nullptr;
  return kExitOk;
}

int cmd_stub_corpus(std::size_t count, std::uint64_t seed, std::optional<std::uint64_t> detector_seed,
                    const std::string& out) {
  std::function<bool(std::string_view)> allow = [](std::string_view) { return true; };
  if (detector_seed) {
    const auto model = ls::planted_detector(*detector_seed);
    allow = [model](std::string_view w) { return !model.fires_on(w); };
  }
  Output o(out);
  const auto lines = ls::stub_corpus(count, seed, allow);
  for (std::size_t i = 0; i < lines.size(); ++i) o.stream() << "stub" << i << "\t" << lines[i] << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box linguistic attacks on audio anti-spoofing detectors"};
  app.require_subcommand(1);

  std::string manifest, out, format = "md", host = "127.0.0.1", token, proxy_out;
  std::vector<std::string> traces, feature_files;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> detector_seed;
  std::uint64_t seed = 0;
  std::size_t count = 200;
  int port = 8765;
  double vif_cutoff = 10.0;

  auto* attack = app.add_subcommand("attack", "run an attack campaign from a TOML manifest");
  attack->add_option("--manifest", manifest, "run manifest")->required()->check(CLI::ExistingFile);
  attack->add_option("--workers", workers, "override the manifest's worker count");

  auto* metrics = app.add_subcommand("metrics", "OC/AUA/ASR/COS per run found in trace files");
  metrics->add_option("--trace", traces, "trace.jsonl")->required()->check(CLI::ExistingFile);
  metrics->add_option("--out", out, "output file (default stdout)");

  auto* features = app.add_subcommand("features", "recompute the feature table from traces");
  features->add_option("--trace", traces, "trace.jsonl")->required()->check(CLI::ExistingFile);
  features->add_option("--manifest", manifest, "manifest naming the oracles")->required()->check(CLI::ExistingFile);
  features->add_option("--out", out, "features CSV (default stdout)");
  features->add_option("--workers", workers, "worker count");

  auto* analyze = app.add_subcommand("analyze", "VIF screen, logistic regression and t-tests");
  analyze->add_option("--features", feature_files, "features CSV")->required()->check(CLI::ExistingFile);
  analyze->add_option("--vif-cutoff", vif_cutoff, "drop columns above this VIF")->check(CLI::PositiveNumber);
  analyze->add_option("--format", format, "md or csv");
  analyze->add_option("--proxy-out", proxy_out, "write the fitted model as a proxy JSON");
  analyze->add_option("--out", out, "output file (default stdout)");

  auto* report = app.add_subcommand("report", "results table from trace files");
  report->add_option("--trace", traces, "trace.jsonl")->required()->check(CLI::ExistingFile);
  report->add_option("--format", format, "md, csv or jsonl");
  report->add_option("--out", out, "output file (default stdout)");

  auto* audit = app.add_subcommand("audit", "re-check every perturbation in traces against its policy");
  audit->add_option("--trace", traces, "trace.jsonl")->required()->check(CLI::ExistingFile);
  audit->add_option("--manifest", manifest, "manifest naming the oracles")->required()->check(CLI::ExistingFile);

  auto* serve = app.add_subcommand("stub-serve", "serve the stub oracles over HTTP");
  serve->add_option("--seed", seed, "stub seed");
  serve->add_option("--port", port, "port, 0 for any")->check(CLI::Range(0, 65535));
  serve->add_option("--host", host, "bind address");
  serve->add_option("--token", token, "required bearer token");

  auto* corpus = app.add_subcommand("stub-corpus", "print a templated stub corpus");
  corpus->add_option("--count", count, "number of lines");
  corpus->add_option("--seed", seed, "corpus seed");
  corpus->add_option("--avoid-triggers", detector_seed, "leave out words the stub detector with this seed fires on");
  corpus->add_option("--out", out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*attack) return cmd_attack(manifest, workers);
    if (*metrics) return cmd_metrics(traces, out);
    if (*features) return cmd_features(traces, manifest, out, workers);
    if (*analyze) return cmd_analyze(feature_files, vif_cutoff, format, proxy_out, out);
    if (*report) return cmd_report(traces, format, out);
    if (*audit) return cmd_audit(traces, manifest);
    if (*serve) return cmd_stub_serve(seed, port, host, token);
    if (*corpus) return cmd_stub_corpus(count, seed, detector_seed, out);
  } catch (const ls::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    const bool usage = e.code() == ls::ErrorCode::ManifestError || e.code() == ls::ErrorCode::InvalidArgument;
    return usage ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
