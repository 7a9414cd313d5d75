// Command-line entry point. Exit codes: 0 success, 1 validation failure, 2 runtime or usage error.

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <set>

#include "transec/config.hpp"
#include "transec/corpus.hpp"
#include "transec/metrics.hpp"
#include "transec/pipeline.hpp"
#include "transec/rag.hpp"
#include "transec/review.hpp"
#include "transec/review_http.hpp"
#include "transec/taxonomy.hpp"

namespace fs = std::filesystem;
using namespace transec;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

RunConfig config_from(const std::string& path) {
    if (path.empty()) return parse_run_config(json::object(), fs::path("."));
    return load_run_config(path);
}

/// Marks an output as partial until commit() runs.
class InProgress {
public:
    explicit InProgress(fs::path out) : marker_(out.string() + ".inprogress") {
        if (out.has_parent_path()) fs::create_directories(out.parent_path());
        write_file(marker_, "");
    }
    void commit() { fs::remove(marker_); }

private:
    fs::path marker_;
};

void append_lines(const fs::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& l : lines) out << l << '\n';
}

/// Writes a complete JSONL output: provenance header then records.
template <class Records>
void write_jsonl(const fs::path& path, const ordered_json& meta, const Records& records) {
    InProgress marker(path);
    std::string text = meta.dump() + "\n";
    for (const auto& r : records) text += to_json(r).dump() + "\n";
    write_file(path, text);
    marker.commit();
}

void write_text(const fs::path& path, const std::string& text) {
    InProgress marker(path);
    write_file(path, text);
    marker.commit();
}

Corpus corpus_from(const std::string& flag, const RunConfig& cfg) {
    if (!flag.empty()) return load_corpus(flag);
    if (!cfg.corpus) throw InvalidArgument("no corpus given (flag or config 'corpus')");
    return load_corpus(*cfg.corpus);
}

std::vector<FinalVerdict> load_verdicts(const std::vector<std::string>& paths) {
    std::vector<FinalVerdict> out;
    for (const auto& p : paths) {
        auto v = load_final_verdicts(p);
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

// ---- subcommands -----------------------------------------------------------

struct Common {
    std::string config;
    std::string output;
};

int cmd_ingest(const Common& c, const std::string& feed, std::size_t min_tokens, std::size_t max_tokens,
               const std::string& tokenizer, const std::string& skipped_path) {
    auto cfg = config_from(c.config);
    IngestFilter filter;
    filter.min_tokens = min_tokens;
    filter.max_tokens = max_tokens;
    filter.tokenizer_id = tokenizer;
    if (!TokenizerRegistry::instance().contains(tokenizer)) throw InvalidArgument("unknown tokenizer '" + tokenizer + "'");
    std::vector<std::optional<VulnRecord>> records;
    for_each_jsonl_file(feed, [&](std::size_t, const json& j) { records.push_back(parse_vuln_record(j)); });
    auto result = ingest_candidates(records, filter);
    write_jsonl(c.output, meta_record(cfg, "ingest"), result.candidates);
    if (!skipped_path.empty()) {
        std::vector<ordered_json> rows;
        std::string text = meta_record(cfg, "ingest").dump() + "\n";
        for (const auto& s : result.skipped)
            text += ordered_json{{"record_index", s.record_index}, {"cve_id", s.cve_id}, {"path", s.path},
                                 {"reason", s.reason}}
                        .dump() +
                    "\n";
        write_text(skipped_path, text);
    }
    std::cout << "candidates\t" << result.candidates.size() << "\nskipped\t" << result.skipped.size() << "\n";
    return kExitOk;
}

int cmd_validate(const std::string& corpus_path, const std::string& spec_path) {
    Corpus corpus = load_corpus(corpus_path);
    DistributionSpec spec = spec_path.empty() ? target_distribution() : parse_distribution_spec(read_file(spec_path));
    auto report = validate_distribution(corpus, spec);
    std::cout << "total\t" << report.observed.total << "\npatched\t" << report.observed.patched << "\nvulnerable\t"
              << report.observed.vulnerable << "\n";
    bool totals_ok = !spec.declared || *spec.declared == report.observed;
    for (const auto& m : report.mismatches)
        std::cout << "mismatch\t" << m.language_group << "\t" << to_string(m.cwe) << "\t" << to_string(m.status)
                  << "\texpected=" << m.expected << "\tobserved=" << m.observed << "\n";
    bool ok = report.clean() && totals_ok;
    std::cout << (ok ? "status\tclean\n" : "status\tmismatch\n");
    return ok ? kExitOk : kExitValidation;
}

int cmd_synth(const Common& c, const std::string& spec_path) {
    auto cfg = config_from(c.config);
    DistributionSpec spec = spec_path.empty() ? target_distribution() : parse_distribution_spec(read_file(spec_path));
    auto corpus = make_synthetic_corpus(spec, cfg.seed("synthetic"));
    write_text(c.output, meta_record(cfg, "synth").dump() + "\n" + serialize_corpus(corpus));
    std::cout << "samples\t" << corpus.size() << "\n";
    return kExitOk;
}

std::vector<LanguagePair> pairs_from(const std::string& flag, const RunConfig& cfg) {
    if (flag.empty()) return cfg.language_pairs;
    std::vector<LanguagePair> out;
    std::size_t pos = 0;
    while (pos <= flag.size()) {
        auto comma = flag.find(',', pos);
        out.push_back(parse_language_pair(flag.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

/// Appends results chunk by chunk so an interrupted run keeps its completed tasks.
template <class RunChunk>
int resumable_translate(const Common& c, const RunConfig& cfg, const std::string& command,
                        const std::vector<TranslationTask>& all_tasks, RunChunk&& run_chunk) {
    fs::path out(c.output);
    std::set<std::string> done;
    bool fresh = !fs::exists(out);
    if (!fresh)
        for (const auto& r : load_translation_results(out)) done.insert(r.task.key());
    std::vector<TranslationTask> todo;
    for (const auto& t : all_tasks)
        if (!done.contains(t.key())) todo.push_back(t);
    InProgress marker(out);
    if (fresh) append_lines(out, {meta_record(cfg, command).dump()});
    const std::size_t chunk = std::max<std::size_t>(cfg.concurrency, 1);
    std::size_t failures = 0;
    for (std::size_t i = 0; i < todo.size(); i += chunk) {
        std::vector<TranslationTask> slice(todo.begin() + static_cast<std::ptrdiff_t>(i),
                                           todo.begin() + static_cast<std::ptrdiff_t>(std::min(todo.size(), i + chunk)));
        std::vector<std::string> lines;
        for (const auto& r : run_chunk(slice)) {
            if (r.parse_status != ParseStatus::Ok) ++failures;
            lines.push_back(to_json(r).dump());
        }
        append_lines(out, lines);
    }
    marker.commit();
    std::cout << "tasks\t" << all_tasks.size() << "\nskipped_completed\t" << done.size() << "\nrun\t" << todo.size()
              << "\nnot_ok\t" << failures << "\n";
    return kExitOk;
}

int cmd_translate(const Common& c, const std::string& corpus_flag, const std::string& model,
                  const std::string& pairs_flag) {
    auto cfg = config_from(c.config);
    const auto& profile = cfg.model(model);
    auto corpus = corpus_from(corpus_flag, cfg);
    auto pairs = pairs_from(pairs_flag, cfg);
    ClientPool pool(cfg);
    auto& client = pool.get(model);
    auto tasks = make_tasks(corpus, pairs, model);
    return resumable_translate(c, cfg, "translate", tasks, [&](const std::vector<TranslationTask>& slice) {
        return run_batch(slice, corpus, client, profile, cfg.concurrency, cfg.run_options());
    });
}

int cmd_judge(const Common& c, const std::string& results_path, const std::string& corpus_flag,
              const std::string& exchanges_path) {
    auto cfg = config_from(c.config);
    if (cfg.judges.size() < 2) throw InvalidArgument("config must name at least 2 judges");
    if (cfg.arbiter.empty()) throw InvalidArgument("config must name an arbiter");
    if (!cfg.exemplars) throw InvalidArgument("config must name an exemplars file");
    auto exemplars = load_exemplar_store(*cfg.exemplars);
    auto corpus = corpus_from(corpus_flag, cfg);
    auto results = load_translation_results(results_path);
    ClientPool pool(cfg);
    std::vector<JudgeEndpoint> judges;
    for (const auto& id : cfg.judges) judges.push_back(pool.endpoint(id));
    auto arbiter = pool.endpoint(cfg.arbiter);
    AdjudicationOptions opts;
    opts.variant = cfg.judge_variant;
    opts.run = cfg.run_options();
    auto run = judge_results(results, corpus, exemplars, judges, arbiter, opts);
    write_jsonl(c.output, meta_record(cfg, "judge"), run.verdicts);
    if (!exchanges_path.empty()) write_jsonl(exchanges_path, meta_record(cfg, "judge"), run.exchanges);
    std::cout << "verdicts\t" << run.verdicts.size() << "\narbitrated\t" << run.arbitrated << "\nneeds_human\t"
              << run.needs_human << "\n";
    return kExitOk;
}

std::atomic<httplib::Server*> g_server{nullptr};

int cmd_review_serve(const Common& c, const std::string& host, int port, const std::string& results_path,
                     const std::string& corpus_flag) {
    auto cfg = config_from(c.config);
    review::ServiceOptions so;
    so.event_log = cfg.review_event_log;
    if (cfg.fixed_clock) so.clock = fixed_clock(*cfg.fixed_clock);
    so.pseudonym_salt = cfg.config_hash();
    review::TokenMap tokens;
    if (cfg.review_tokens) tokens = review::TokenMap::from_file(*cfg.review_tokens);
    review::ReviewService service(so);
    if (!results_path.empty()) {
        auto corpus = corpus_from(corpus_flag, cfg);
        std::vector<std::string> fresh;
        auto existing = service.case_ids();
        std::set<std::string> have(existing.begin(), existing.end());
        for (const auto& r : load_translation_results(results_path)) {
            if (r.parse_status != ParseStatus::Ok || have.contains(r.task.key())) continue;
            service.add_case(r.task.key(), review::make_materials(corpus.at(r.task.sample_id), r));
            fresh.push_back(r.task.key());
        }
        if (!fresh.empty()) {
            if (cfg.reviewers.size() < 2) throw InvalidArgument("config review.reviewers needs at least 2 reviewers");
            service.assign(fresh, cfg.reviewers, cfg.seed("assignment"));
        }
        std::cerr << "cases loaded: " << fresh.size() << "\n";
    }
    httplib::Server srv;
    review::ReviewHttpApi api(service, tokens);
    api.mount(srv);
    g_server = &srv;
    std::signal(SIGINT, [](int) {
        if (auto* s = g_server.load()) s->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (auto* s = g_server.load()) s->stop();
    });
    std::cerr << "review API listening on " << host << ":" << port << "\n";
    if (!srv.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
    return kExitOk;
}

int cmd_metrics(const Common& c, const std::vector<std::string>& verdicts, const std::string& by,
                const std::string& corpus_flag) {
    auto cfg = config_from(c.config);
    auto dims = metrics::parse_dimensions(by);
    Thresholds th;
    if (!corpus_flag.empty()) th = compute_thresholds(load_corpus(corpus_flag));
    std::vector<metrics::OutcomeRecord> records;
    for (const auto& v : load_verdicts(verdicts)) records.push_back(metrics::outcome_from_verdict(v, th));
    auto meta = meta_lines(cfg, "metrics");
    meta.push_back("complexity_thresholds=" + std::to_string(th.t1) + "," + std::to_string(th.t2));
    meta.push_back("unparseable_policy=non_functional,excluded_from_vir_vpr");
    auto text = metrics::format_report_tsv(metrics::slice_reports(records, dims), dims, meta);
    if (c.output.empty())
        std::cout << text;
    else
        write_text(c.output, text);
    return kExitOk;
}

int cmd_taxonomy_table(const Common& c, const std::string& labels_path, const std::vector<std::string>& verdicts,
                       bool no_merge, const std::string& schema_path) {
    auto cfg = config_from(c.config);
    auto schema = schema_path.empty() ? taxonomy::default_schema() : taxonomy::load_schema(schema_path);
    auto labels = taxonomy::load_labels(labels_path, schema);
    std::map<std::string, Cwe> case_cwe;
    for (const auto& v : load_verdicts(verdicts))
        if (v.cwe) case_cwe[v.case_id] = *v.cwe;
    auto table = taxonomy::distribution_table(labels, case_cwe, !no_merge, schema);
    auto meta = meta_lines(cfg, "taxonomy table");
    meta.push_back("total_weighting=label_count");
    meta.push_back(std::string("merged_columns=") + (no_merge ? "none" : "CWE-787&125"));
    auto text = taxonomy::format_table_tsv(table, schema, meta);
    if (c.output.empty())
        std::cout << text;
    else
        write_text(c.output, text);
    return kExitOk;
}

int cmd_rag_build(const Common& c, const std::string& kb_flag, const std::string& checkpoint,
                  const std::string& resume) {
    auto cfg = config_from(c.config);
    fs::path kb = kb_flag.empty() ? (cfg.knowledge_base ? *cfg.knowledge_base : fs::path()) : fs::path(kb_flag);
    if (kb.empty()) throw InvalidArgument("no knowledge base given (flag or config 'knowledge_base')");
    auto entries = rag::load_knowledge_base(kb);
    auto embedder = make_embedder(cfg);
    rag::BuildOptions opts;
    opts.batch_size = cfg.rag_batch_size;
    if (!checkpoint.empty()) opts.checkpoint = checkpoint;
    std::optional<rag::KnowledgeIndex> prior;
    if (!resume.empty()) {
        prior = rag::load_index(resume);
        opts.resume = &*prior;
    }
    InProgress marker(c.output);
    auto index = rag::build_index(entries, *embedder, opts);
    rag::save_index(index, c.output);
    marker.commit();
    std::cout << "entries\t" << index.size() << "\ndim\t" << index.dim << "\nembedder\t" << index.embedder_id << "\n";
    return kExitOk;
}

int cmd_rag_translate(const Common& c, const std::string& corpus_flag, const std::string& model,
                      const std::string& index_path, const std::string& pairs_flag) {
    auto cfg = config_from(c.config);
    const auto& profile = cfg.model(model);
    auto corpus = corpus_from(corpus_flag, cfg);
    auto index = rag::load_index(index_path);
    auto embedder = make_embedder(cfg);
    if (embedder->id() != index.embedder_id)
        throw InvalidArgument("configured embedder '" + embedder->id() + "' does not match index embedder '" +
                              index.embedder_id + "'");
    ClientPool pool(cfg);
    auto& client = pool.get(model);
    auto tasks = make_tasks(corpus, pairs_from(pairs_flag, cfg), model);
    rag::RagSettings settings{cfg.rag_k, cfg.rag_threshold};
    return resumable_translate(c, cfg, "rag translate", tasks, [&](const std::vector<TranslationTask>& slice) {
        return rag::run_rag_batch(slice, corpus, index, *embedder, client, profile, cfg.concurrency,
                                  cfg.run_options(), settings);
    });
}

int cmd_compare(const Common& c, const std::string& baseline, const std::string& strategy) {
    auto cfg = config_from(c.config);
    std::vector<metrics::OutcomeRecord> b, s;
    for (const auto& v : load_final_verdicts(baseline)) b.push_back(metrics::outcome_from_verdict(v));
    for (const auto& v : load_final_verdicts(strategy)) s.push_back(metrics::outcome_from_verdict(v));
    auto bv = metrics::vir(b), sv = metrics::vir(s);
    std::string text;
    for (const auto& m : meta_lines(cfg, "compare")) text += "# " + m + "\n";
    text += "metric\tvalue\n";
    text += "baseline_vir_pct\t" + metrics::format_percent(bv.value()) + "\n";
    text += "strategy_vir_pct\t" + metrics::format_percent(sv.value()) + "\n";
    auto imp = metrics::vir_relative(b, s);
    text += "relative_vir_pct\t" + (imp ? metrics::format1(imp->relative_percent) : std::string("NA")) + "\n";
    text += "improvement_pct\t" + (imp ? metrics::format1(imp->improvement_percent) : std::string("NA")) + "\n";
    if (c.output.empty())
        std::cout << text;
    else
        write_text(c.output, text);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Security evaluation harness for LLM code translation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));
    Common common;
    auto add_config = [&](CLI::App* sub) { sub->add_option("--config", common.config, "Run configuration (JSON)"); };
    std::function<int()> action;

    auto* ingest = app.add_subcommand("ingest", "Filter a vulnerability feed into corpus candidates");
    std::string feed, tokenizer(kDefaultTokenizer), skipped;
    std::size_t min_tokens = 500, max_tokens = 1600;
    ingest->add_option("feed", feed, "Feed file (JSONL)")->required()->check(CLI::ExistingFile);
    ingest->add_option("-o,--output", common.output, "Candidates file")->required();
    ingest->add_option("--min-tokens", min_tokens);
    ingest->add_option("--max-tokens", max_tokens);
    ingest->add_option("--tokenizer", tokenizer);
    ingest->add_option("--skipped", skipped, "Write skip records here");
    add_config(ingest);
    ingest->callback([&] { action = [&] { return cmd_ingest(common, feed, min_tokens, max_tokens, tokenizer, skipped); }; });

    auto* validate = app.add_subcommand("validate", "Check a corpus against a distribution spec");
    std::string corpus_path, spec_path;
    validate->add_option("corpus", corpus_path)->required()->check(CLI::ExistingFile);
    validate->add_option("spec", spec_path, "Distribution spec (default: built-in target cells)")
        ->check(CLI::ExistingFile);
    validate->callback([&] { action = [&] { return cmd_validate(corpus_path, spec_path); }; });

    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus matching a distribution spec");
    synth->add_option("spec", spec_path)->check(CLI::ExistingFile);
    synth->add_option("-o,--output", common.output)->required();
    add_config(synth);
    synth->callback([&] { action = [&] { return cmd_synth(common, spec_path); }; });

    auto* translate = app.add_subcommand("translate", "Translate corpus samples with one model (resumable)");
    std::string model, pairs;
    translate->add_option("--corpus", corpus_path);
    translate->add_option("--model", model)->required();
    translate->add_option("--pairs", pairs, "Comma-separated Source->Target list");
    translate->add_option("-o,--output", common.output)->required();
    add_config(translate);
    translate->callback([&] { action = [&] { return cmd_translate(common, corpus_path, model, pairs); }; });

    auto* judge = app.add_subcommand("judge", "Adjudicate translation results with judges and an arbiter");
    std::string results, exchanges;
    judge->add_option("results", results)->required()->check(CLI::ExistingFile);
    judge->add_option("--corpus", corpus_path);
    judge->add_option("--exchanges", exchanges, "Write raw judge exchanges here");
    judge->add_option("-o,--output", common.output)->required();
    add_config(judge);
    judge->callback([&] { action = [&] { return cmd_judge(common, results, corpus_path, exchanges); }; });

    auto* review = app.add_subcommand("review", "Human review workflow");
    review->require_subcommand(1);
    auto* serve = review->add_subcommand("serve", "Serve the review HTTP API");
    std::string host = "127.0.0.1";
    int port = 8080;
    serve->add_option("--host", host);
    serve->add_option("--port", port);
    serve->add_option("--results", results, "Translation results to load as cases");
    serve->add_option("--corpus", corpus_path);
    add_config(serve);
    serve->callback([&] { action = [&] { return cmd_review_serve(common, host, port, results, corpus_path); }; });

    auto* metrics_cmd = app.add_subcommand("metrics", "FCR/VIR/VPR report from verdict files");
    std::vector<std::string> verdict_files;
    std::string by;
    metrics_cmd->add_option("verdicts", verdict_files)->required()->check(CLI::ExistingFile);
    metrics_cmd->add_option("--by", by, "Slice dimensions: model,pair,cwe,complexity");
    metrics_cmd->add_option("--corpus", corpus_path, "Derive complexity thresholds from this corpus");
    metrics_cmd->add_option("-o,--output", common.output);
    add_config(metrics_cmd);
    metrics_cmd->callback([&] { action = [&] { return cmd_metrics(common, verdict_files, by, corpus_path); }; });

    auto* taxonomy_cmd = app.add_subcommand("taxonomy", "Vulnerable-translation pattern tables");
    taxonomy_cmd->require_subcommand(1);
    auto* table = taxonomy_cmd->add_subcommand("table", "Per-CWE pattern distribution");
    std::string labels, schema;
    bool no_merge = false;
    table->add_option("labels", labels)->required()->check(CLI::ExistingFile);
    table->add_option("--verdicts", verdict_files, "Verdict files mapping case ids to CWEs");
    table->add_option("--schema", schema, "Pattern schema file (default: built-in)");
    table->add_flag("--no-merge", no_merge, "Keep CWE-787 and CWE-125 in separate columns");
    table->add_option("-o,--output", common.output);
    add_config(table);
    table->callback([&] { action = [&] { return cmd_taxonomy_table(common, labels, verdict_files, no_merge, schema); }; });

    auto* rag_cmd = app.add_subcommand("rag", "Retrieval-augmented mitigation");
    rag_cmd->require_subcommand(1);
    auto* build = rag_cmd->add_subcommand("build-index", "Embed a knowledge base into an index file");
    std::string kb, checkpoint, resume, index_path;
    build->add_option("kb", kb, "Knowledge base (default: config knowledge_base)");
    build->add_option("-o,--output", common.output)->required();
    build->add_option("--checkpoint", checkpoint, "Partial index written if the embedder fails");
    build->add_option("--resume", resume, "Continue from a partial index");
    add_config(build);
    build->callback([&] { action = [&] { return cmd_rag_build(common, kb, checkpoint, resume); }; });
    auto* rag_tr = rag_cmd->add_subcommand("translate", "Translate with retrieved security considerations");
    rag_tr->add_option("--corpus", corpus_path);
    rag_tr->add_option("--model", model)->required();
    rag_tr->add_option("--index", index_path)->required()->check(CLI::ExistingFile);
    rag_tr->add_option("--pairs", pairs);
    rag_tr->add_option("-o,--output", common.output)->required();
    add_config(rag_tr);
    rag_tr->callback([&] { action = [&] { return cmd_rag_translate(common, corpus_path, model, index_path, pairs); }; });

    auto* compare = app.add_subcommand("compare", "Relative VIR and improvement of a strategy over a baseline");
    std::string baseline, strategy;
    compare->add_option("baseline", baseline)->required()->check(CLI::ExistingFile);
    compare->add_option("strategy", strategy)->required()->check(CLI::ExistingFile);
    compare->add_option("-o,--output", common.output);
    add_config(compare);
    compare->callback([&] { action = [&] { return cmd_compare(common, baseline, strategy); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitRuntime;
    }
    try {
        return action ? action() : kExitRuntime;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
