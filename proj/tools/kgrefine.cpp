// kgrefine: seeded, scriptable pipeline for knowledge-graph refinement.
//
// Subcommands: synth, mine, poison, refine, eval. Every subcommand is a pure
// function of its input files, flags and seed; reruns produce byte-identical
// outputs. Exit codes: 0 success, 2 parse error, 3 validation error,
// 4 numerical failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "kgr/em.hpp"
#include "kgr/embedding.hpp"
#include "kgr/errors.hpp"
#include "kgr/eval.hpp"
#include "kgr/format.hpp"
#include "kgr/kg.hpp"
#include "kgr/rng.hpp"
#include "kgr/rules.hpp"
#include "kgr/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config file: flat sections of scalar keys. CLI flags take precedence over
// config values, config values over built-in defaults. Unknown keys are
// rejected against the full schema so one file can drive a whole pipeline.
// ---------------------------------------------------------------------------

const std::unordered_map<std::string, std::vector<std::string>>& config_schema() {
    static const std::unordered_map<std::string, std::vector<std::string>> schema = {
        {"", {"seed", "threads"}},
        {"paths",
         {"graph", "candidates", "rules", "out", "out_dir", "manifest", "report", "model",
          "labels", "scores", "test", "audit_out"}},
        {"mining", {"beta", "min_support"}},
        {"train",
         {"backend", "dim", "gamma", "learning_rate", "epochs", "negatives_per_positive",
          "batch_size"}},
        {"em",
         {"delta", "rounds", "mix_lambda", "retrain_epochs", "weight_learning_rate",
          "weight_epochs", "mode"}},
        {"eval", {"task", "threshold", "hits_ks"}},
        {"synth", {"preset", "entities", "relations", "density", "noise_rate"}},
        {"poison", {"n", "audit"}},
    };
    return schema;
}

class Config {
  public:
    void load(const fs::path& path) {
        std::ifstream in(path);
        if (!in) throw kgr::ParseError("cannot open config file: " + path.string());
        try {
            root_ = json::parse(in);
        } catch (const json::parse_error& e) {
            throw kgr::ParseError("config file " + path.string() + ": " + e.what());
        }
        if (!root_.is_object()) throw kgr::ValidationError("config root must be an object");
        const auto& schema = config_schema();
        for (const auto& [section, value] : root_.items()) {
            auto it = schema.find(section);
            if (it != schema.end() && section.empty() == false) {
                if (!value.is_object()) {
                    throw kgr::ValidationError("config section '" + section +
                                               "' must be an object");
                }
                for (const auto& [key, v] : value.items()) {
                    if (std::find(it->second.begin(), it->second.end(), key) ==
                        it->second.end()) {
                        throw kgr::ValidationError("unknown config key '" + section + "." + key +
                                                   "'");
                    }
                }
            } else {
                const auto& top = schema.at("");
                if (std::find(top.begin(), top.end(), section) == top.end()) {
                    throw kgr::ValidationError("unknown config key '" + section + "'");
                }
            }
        }
        loaded_ = true;
    }

    // Applies section.key to target unless the CLI flag was given.
    template <typename T>
    void apply(const CLI::Option* opt, const std::string& section, const std::string& key,
               T& target) const {
        if (!loaded_) return;
        if (opt != nullptr && opt->count() > 0) return;
        const json* node = &root_;
        if (!section.empty()) {
            auto it = root_.find(section);
            if (it == root_.end()) return;
            node = &*it;
        }
        auto it = node->find(key);
        if (it == node->end()) return;
        try {
            target = it->get<T>();
        } catch (const json::exception& e) {
            throw kgr::ValidationError("config key '" + section + "." + key + "': " + e.what());
        }
    }

  private:
    json root_;
    bool loaded_ = false;
};

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
    return buf;
}

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw kgr::ComputeError("cannot write file: " + path.string());
    out << j.dump(2) << '\n';
}

kgr::KnowledgeGraph load_graph_args(const std::string& graph, const std::string& candidates) {
    std::optional<fs::path> cand;
    if (!candidates.empty()) cand = fs::path(candidates);
    kgr::KnowledgeGraph g = kgr::load_graph(graph, cand);
    if (g.cross_set_duplicates() > 0) {
        std::cerr << "warning: " << g.cross_set_duplicates()
                  << " candidate triplet(s) already observed; kept as observed\n";
    }
    return g;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string preset;
    std::uint64_t entities = 1000;
    std::uint64_t relations = 20;
    double density = 0.9;
    double noise_rate = 0.10;
    std::uint64_t seed = 20200807;
    std::string out_dir;
};

int run_synth(const SynthArgs& a) {
    kgr::SynthSpec spec;
    if (a.preset == "acceptance") {
        spec = kgr::default_acceptance_spec();
        spec.seed = a.seed;
    } else if (a.preset.empty()) {
        spec.entity_count = a.entities;
        spec.relation_count = a.relations;
        spec.base_density = a.density;
        spec.noise_rate = a.noise_rate;
        spec.seed = a.seed;
    } else {
        throw kgr::ValidationError("unknown preset '" + a.preset + "'");
    }

    const kgr::SynthOutput out = kgr::generate(spec);

    const fs::path dir(a.out_dir);
    fs::create_directories(dir);
    kgr::save_graph(out.graph, dir / "observed.tsv", dir / "candidates.tsv");
    kgr::save_labels(out, dir / "labels.tsv");
    kgr::save_rules(out.planted, out.graph, dir / "planted_rules.tsv");
    kgr::save_id_map(out.graph.entities(), dir / "entity_ids.tsv");
    kgr::save_id_map(out.graph.relations(), dir / "relation_ids.tsv");

    std::cout << "entities\t" << out.graph.entity_count() << "\n"
              << "relations\t" << out.graph.relation_count() << "\n"
              << "observed\t" << out.graph.observed().size() << "\n"
              << "candidates\t" << out.graph.candidates().size() << "\n"
              << "planted_rules\t" << out.planted.size() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// mine
// ---------------------------------------------------------------------------

struct MineArgs {
    std::string graph;
    std::string candidates;
    double beta = 0.3;
    std::uint64_t min_support = 3;
    std::string out;
};

int run_mine(const MineArgs& a) {
    const kgr::KnowledgeGraph g = load_graph_args(a.graph, a.candidates);
    const auto rules = kgr::mine_rules(g, a.beta, a.min_support);
    kgr::save_rules(rules, g, a.out);

    std::size_t per_kind[4] = {0, 0, 0, 0};
    for (const auto& r : rules) per_kind[static_cast<int>(r.pattern.kind)]++;
    std::cout << "transitive\t" << per_kind[0] << "\n"
              << "symmetric\t" << per_kind[1] << "\n"
              << "block\t" << per_kind[2] << "\n"
              << "conflict\t" << per_kind[3] << "\n"
              << "total\t" << rules.size() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// poison
// ---------------------------------------------------------------------------

struct PoisonArgs {
    std::string graph;
    std::string candidates;
    std::uint64_t n = 10000;
    std::uint64_t seed = 0;
    std::string out;
    std::uint64_t audit = 0;
    std::string audit_out;
};

int run_poison(const PoisonArgs& a) {
    const kgr::KnowledgeGraph g = load_graph_args(a.graph, a.candidates);
    const auto poisons = kgr::generate_poisons(g, a.n, a.seed);
    kgr::save_triplets(g, poisons, a.out);
    if (a.audit > 0) {
        const fs::path audit_path =
            a.audit_out.empty() ? fs::path(a.out).replace_extension(".audit.tsv")
                                : fs::path(a.audit_out);
        kgr::label_audit_sample(poisons, g, a.audit, kgr::derive_seed(a.seed, 0xa0d17),
                                audit_path);
    }
    std::cout << "poisons\t" << poisons.size() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// refine
// ---------------------------------------------------------------------------

struct RefineArgs {
    std::string graph;
    std::string candidates;
    std::string rules;
    std::string out;
    std::string manifest;
    std::string model_out;
    std::string backend = "transe";
    std::string mode = "biogrer";
    kgr::EmConfig em;
    double threshold = -1.0;  // < 0 means the mode midpoint
    std::uint64_t seed = 0;
    int threads = 1;
    bool timestamp = false;
};

int run_refine(const RefineArgs& a) {
    kgr::EmConfig cfg = a.em;
    cfg.score_kind = kgr::score_kind_from_name(a.backend);
    cfg.train.seed = a.seed;
    const kgr::ScoreMode mode = kgr::score_mode_from_name(a.mode);

    const kgr::KnowledgeGraph g = load_graph_args(a.graph, a.candidates);
    std::vector<kgr::RuleInstance> rules = kgr::load_rules(a.rules, g);

    kgr::RefinementResult result = kgr::run_refinement(g, std::move(rules), cfg, a.threads);

    const double threshold =
        a.threshold >= 0.0 ? a.threshold : kgr::classification_threshold(mode, cfg.mix_lambda);

    // Batch scoring against one grounding view over the distilled-true set.
    const kgr::GroundingView view(g, result.state.distilled_true);
    const kgr::RuleMatcher matcher(result.rules, g.relation_count());

    std::ofstream out(a.out, std::ios::trunc);
    if (!out) throw kgr::ComputeError("cannot write scores file: " + a.out);
    const auto& candidates = g.candidates();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const kgr::Triplet& tau = candidates[i];
        double f = 0.0;
        for (const auto& [rule_idx, n] : matcher.features(view, tau)) {
            const kgr::RuleInstance& rule = result.rules[rule_idx];
            f += rule.polarity() * rule.weight * static_cast<double>(n);
        }
        const double rule_prob = kgr::stable_sigmoid(f);
        const double q = result.state.q[i];
        const double final_score =
            mode == kgr::ScoreMode::q_only ? q : q + cfg.mix_lambda * rule_prob;
        out << g.format(tau) << '\t' << kgr::format_double(q) << '\t'
            << kgr::format_double(rule_prob) << '\t' << kgr::format_double(final_score) << '\t'
            << (final_score >= threshold ? "true" : "false") << '\n';
    }
    out.close();

    if (!a.model_out.empty()) result.model.save(a.model_out, g);

    if (!a.manifest.empty()) {
        json manifest;
        manifest["command"] = "refine";
        manifest["config"] = {
            {"backend", a.backend},
            {"dim", cfg.dim},
            {"gamma", cfg.gamma},
            {"learning_rate", cfg.train.learning_rate},
            {"epochs", cfg.train.epochs},
            {"retrain_epochs", cfg.retrain_epochs},
            {"negatives_per_positive", cfg.train.negatives_per_positive},
            {"batch_size", cfg.train.batch_size},
            {"delta", cfg.delta},
            {"rounds", cfg.rounds},
            {"mix_lambda", cfg.mix_lambda},
            {"weight_learning_rate", cfg.weights.learning_rate},
            {"weight_epochs", cfg.weights.epochs},
            {"mode", a.mode},
            {"threshold", threshold},
            {"threads", a.threads},
        };
        manifest["seed"] = a.seed;
        manifest["graph"] = {{"entities", g.entity_count()},
                             {"relations", g.relation_count()},
                             {"observed", g.observed().size()},
                             {"candidates", g.candidates().size()},
                             {"rules", result.rules.size()}};
        json rounds = json::array();
        for (const auto& s : result.state.history) {
            rounds.push_back({{"round", s.round},
                              {"distilled_true", s.distilled_true},
                              {"distilled_false", s.distilled_false},
                              {"pseudo_likelihood", s.pseudo_likelihood},
                              {"mean_q", s.mean_q},
                              {"mean_abs_q_minus_cond", s.mean_abs_q_minus_cond}});
        }
        manifest["rounds"] = rounds;
        manifest["timestamp"] = a.timestamp ? json(iso_timestamp()) : json(nullptr);
        write_json(manifest, a.manifest);
    }

    std::cout << "scored\t" << candidates.size() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string task = "ptd";
    std::string scores;
    std::string labels;
    std::string graph;
    std::string candidates;
    std::string test;
    std::string model;
    std::string rules;
    std::string mode = "biogrer";
    double mix_lambda = 1.0;
    double threshold = 0.5;
    std::vector<int> ks;
    std::string report;
    std::string csv;
    std::uint64_t seed = 0;
    int threads = 1;
    bool timestamp = false;
};

// Single metric row for tabulation across runs.
void write_csv_row(const json& report, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw kgr::ComputeError("cannot write csv file: " + path.string());
    const json& m = report.at("metrics");
    if (report.at("task") == "ptd") {
        out << "task,precision,recall,f_score,threshold,seed\n";
        out << "ptd," << kgr::format_double(m.at("precision").get<double>()) << ','
            << kgr::format_double(m.at("recall").get<double>()) << ','
            << kgr::format_double(m.at("f_score").get<double>()) << ','
            << kgr::format_double(report.at("config").at("threshold").get<double>()) << ','
            << report.at("seed").get<std::uint64_t>() << '\n';
    } else {
        out << "task,mr,mrr";
        const json& hits = m.at("hits");
        for (const auto& [key, v] : hits.items()) out << ',' << key;
        out << ",seed\nmtp," << kgr::format_double(m.at("mr").get<double>()) << ','
            << kgr::format_double(m.at("mrr").get<double>());
        for (const auto& [key, v] : hits.items()) {
            out << ',' << kgr::format_double(v.get<double>());
        }
        out << ',' << report.at("seed").get<std::uint64_t>() << '\n';
    }
}

// `head<TAB>relation<TAB>tail<TAB>...` with a trailing numeric column of
// interest; returns string-keyed scores.
std::unordered_map<std::string, double> read_scores(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw kgr::ParseError("cannot open scores file: " + path.string());
    std::unordered_map<std::string, double> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto fields = kgr::split(line, '\t');
        if (fields.size() != 7) {
            throw kgr::ParseError(path.string() + ":" + std::to_string(lineno) +
                                  ": expected 7 fields");
        }
        const std::string key = std::string(fields[0]) + "\t" + std::string(fields[1]) + "\t" +
                                std::string(fields[2]);
        out[key] = kgr::parse_double(fields[5], path.string() + ":" + std::to_string(lineno));
    }
    return out;
}

int run_eval(const EvalArgs& a) {
    json report;
    report["task"] = a.task;

    if (a.task == "ptd") {
        if (a.scores.empty() || a.labels.empty()) {
            throw kgr::ValidationError("ptd evaluation needs --scores and --labels");
        }
        const auto scores = read_scores(a.scores);

        std::ifstream in(a.labels);
        if (!in) throw kgr::ParseError("cannot open labels file: " + a.labels);
        std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0, covered = 0;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            const auto fields = kgr::split(line, '\t');
            if (fields.size() != 4) {
                throw kgr::ParseError(a.labels + ":" + std::to_string(lineno) +
                                      ": expected 4 fields");
            }
            const std::string key = std::string(fields[0]) + "\t" + std::string(fields[1]) +
                                    "\t" + std::string(fields[2]);
            auto it = scores.find(key);
            if (it == scores.end()) continue;  // labels cover the whole graph
            ++covered;
            const bool truth = fields[3] == "1";
            const bool predicted = it->second >= a.threshold;
            if (truth && predicted) ++tp;
            if (truth && !predicted) ++fn;
            if (!truth && predicted) ++fp;
            if (!truth && !predicted) ++tn;
        }
        if (covered == 0) throw kgr::ValidationError("no scored triplet carries a label");

        const double precision = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
        const double recall = tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0;
        const double f =
            precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
        report["metrics"] = {{"precision", precision}, {"recall", recall}, {"f_score", f}};
        report["counts"] = {{"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}};
        report["config"] = {{"threshold", a.threshold}, {"scores", a.scores},
                            {"labels", a.labels}};
    } else if (a.task == "mtp") {
        if (a.graph.empty() || a.test.empty() || a.model.empty()) {
            throw kgr::ValidationError("mtp evaluation needs --graph, --test and --model");
        }
        const kgr::KnowledgeGraph g = load_graph_args(a.graph, a.candidates);
        const kgr::EmbeddingModel model = kgr::EmbeddingModel::load(a.model, g);
        const kgr::KnowledgeGraph test_graph = kgr::load_graph(a.test);
        std::vector<kgr::Triplet> test;
        for (const kgr::Triplet& t : test_graph.observed()) {
            const auto h = g.entities().find(test_graph.entities().name(t.head));
            const auto r = g.relations().find(test_graph.relations().name(t.relation));
            const auto tl = g.entities().find(test_graph.entities().name(t.tail));
            if (!h || !r || !tl) {
                throw kgr::ValidationError("test triplet references unknown ids: " +
                                           test_graph.format(t, ' '));
            }
            test.push_back(kgr::Triplet{*h, *r, *tl});
        }

        std::vector<kgr::RuleInstance> rules;
        std::optional<kgr::RuleMatcher> matcher;
        std::optional<kgr::GroundingView> view;
        const kgr::ScoreMode mode = kgr::score_mode_from_name(a.mode);
        if (mode == kgr::ScoreMode::q_plus_lambda_p) {
            if (a.rules.empty()) {
                throw kgr::ValidationError("mode biogrer-star needs --rules");
            }
            rules = kgr::load_rules(a.rules, g);
            matcher.emplace(rules, g.relation_count());
            view.emplace(g, kgr::TripletSet{});
        }
        kgr::Scorer scorer = [&](const kgr::Triplet& t) {
            if (mode == kgr::ScoreMode::q_only) return model.score(t);
            return kgr::final_score(model, rules, *matcher, *view, t, mode, a.mix_lambda);
        };

        const kgr::EvalReport r = kgr::evaluate_mtp(g, test, scorer, a.ks, a.threads);
        report = r.to_json();
        report["config"] = {{"graph", a.graph}, {"test", a.test},   {"model", a.model},
                            {"mode", a.mode},   {"rules", a.rules}, {"mix_lambda", a.mix_lambda}};
    } else {
        throw kgr::ValidationError("unknown eval task '" + a.task + "'");
    }

    report["seed"] = a.seed;
    report["timestamp"] = a.timestamp ? json(iso_timestamp()) : json(nullptr);
    if (!a.report.empty()) write_json(report, a.report);
    if (!a.csv.empty()) write_csv_row(report, a.csv);
    std::cout << report.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowledge-graph refinement: embeddings + logic rules, jointly trained"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file; CLI flags take precedence");
    Config config;

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic labeled graph");
    synth_cmd->option_defaults()->always_capture_default(true);
    auto* o_preset = synth_cmd->add_option("--preset", synth.preset,
                                           "named spec: acceptance (1000 entities, 10% noise)");
    auto* o_entities = synth_cmd->add_option("--entities", synth.entities, "entity count");
    auto* o_relations = synth_cmd->add_option("--relations", synth.relations, "relation count");
    auto* o_density =
        synth_cmd->add_option("--density", synth.density, "true edges per entity per relation");
    auto* o_noise = synth_cmd->add_option("--noise-rate", synth.noise_rate,
                                          "fraction of emitted triplets that are noise");
    auto* o_synth_seed = synth_cmd->add_option("--seed", synth.seed, "generator seed");
    synth_cmd->add_option("--out-dir", synth.out_dir, "output directory")->required();

    MineArgs mine;
    auto* mine_cmd = app.add_subcommand("mine", "mine logic rules from the observed graph");
    mine_cmd->option_defaults()->always_capture_default(true);
    mine_cmd->add_option("--graph", mine.graph, "observed triples (tsv)")->required();
    auto* o_mine_cand =
        mine_cmd->add_option("--candidates", mine.candidates, "candidate triples (tsv)");
    auto* o_beta = mine_cmd->add_option(
        "--beta", mine.beta, "supporting-rule empirical precision threshold");
    auto* o_min_support = mine_cmd->add_option("--min-support", mine.min_support,
                                               "minimum generated/denied set size");
    mine_cmd->add_option("--out", mine.out, "rules file to write")->required();

    PoisonArgs poison;
    auto* poison_cmd = app.add_subcommand("poison", "generate random non-existent triplets");
    poison_cmd->option_defaults()->always_capture_default(true);
    poison_cmd->add_option("--graph", poison.graph, "observed triples (tsv)")->required();
    auto* o_poison_cand =
        poison_cmd->add_option("--candidates", poison.candidates, "candidate triples (tsv)");
    auto* o_n = poison_cmd->add_option("--n", poison.n, "poison count");
    auto* o_poison_seed = poison_cmd->add_option("--seed", poison.seed, "sampler seed");
    poison_cmd->add_option("--out", poison.out, "poisons file to write")->required();
    auto* o_audit = poison_cmd->add_option("--audit", poison.audit,
                                           "also sample this many poisons for manual audit");
    auto* o_audit_out =
        poison_cmd->add_option("--audit-out", poison.audit_out, "audit sample file");

    RefineArgs refine;
    auto* refine_cmd = app.add_subcommand("refine", "run the alternating refinement loop");
    refine_cmd->option_defaults()->always_capture_default(true);
    refine_cmd->add_option("--graph", refine.graph, "observed triples (tsv)")->required();
    refine_cmd->add_option("--candidates", refine.candidates, "candidate triples (tsv)")
        ->required();
    refine_cmd->add_option("--rules", refine.rules, "mined rules file")->required();
    refine_cmd->add_option("--out", refine.out, "per-candidate scores file")->required();
    auto* o_manifest = refine_cmd->add_option("--manifest", refine.manifest, "run manifest JSON");
    auto* o_model_out =
        refine_cmd->add_option("--save-model", refine.model_out, "embedding checkpoint to write");
    auto* o_backend = refine_cmd->add_option(
        "--backend", refine.backend, "embedding score function: transe|distmult|complex");
    auto* o_dim = refine_cmd->add_option("--dim", refine.em.dim, "embedding width");
    auto* o_gamma =
        refine_cmd->add_option("--gamma", refine.em.gamma, "margin bias");
    auto* o_lr = refine_cmd->add_option("--lr", refine.em.train.learning_rate,
                                        "SGD learning rate, grid {0.001,0.01,0.1}");
    auto* o_epochs =
        refine_cmd->add_option("--epochs", refine.em.train.epochs, "warm-start epochs");
    auto* o_retrain = refine_cmd->add_option("--retrain-epochs", refine.em.retrain_epochs,
                                             "continuation epochs per E-step");
    auto* o_negatives = refine_cmd->add_option(
        "--negatives", refine.em.train.negatives_per_positive, "corruptions per positive");
    auto* o_batch =
        refine_cmd->add_option("--batch-size", refine.em.train.batch_size, "SGD batch size");
    auto* o_delta = refine_cmd->add_option("--delta", refine.em.delta,
                                           "distillation threshold, inclusive");
    auto* o_rounds = refine_cmd->add_option("--rounds", refine.em.rounds,
                                            "EM rounds; 0 is the embedding-only baseline");
    auto* o_lambda = refine_cmd->add_option("--mix-lambda", refine.em.mix_lambda,
                                            "rule-probability weight in biogrer-star scoring");
    auto* o_lr_w = refine_cmd->add_option("--lr-w", refine.em.weights.learning_rate,
                                          "rule-weight learning rate");
    auto* o_epochs_w =
        refine_cmd->add_option("--epochs-w", refine.em.weights.epochs, "rule-weight epochs");
    auto* o_mode = refine_cmd->add_option("--mode", refine.mode,
                                          "final scorer: biogrer (Q) or biogrer-star (Q+λP)");
    auto* o_threshold = refine_cmd->add_option(
        "--threshold", refine.threshold, "verdict threshold; default is the score midpoint");
    auto* o_refine_seed = refine_cmd->add_option("--seed", refine.seed, "run seed");
    auto* o_refine_threads =
        refine_cmd->add_option("--threads", refine.threads, "worker threads");
    refine_cmd->add_flag("--timestamp", refine.timestamp, "stamp the manifest with wall time");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate scores or a saved model");
    eval_cmd->option_defaults()->always_capture_default(true);
    auto* o_task = eval_cmd->add_option("--task", eval.task, "ptd or mtp");
    eval_cmd->add_option("--scores", eval.scores, "refine output scores (ptd)");
    eval_cmd->add_option("--labels", eval.labels, "labels tsv (ptd)");
    eval_cmd->add_option("--graph", eval.graph, "observed triples (mtp)");
    eval_cmd->add_option("--candidates", eval.candidates, "candidate triples (mtp)");
    eval_cmd->add_option("--test", eval.test, "held-out test triples (mtp)");
    eval_cmd->add_option("--model", eval.model, "embedding checkpoint (mtp)");
    eval_cmd->add_option("--rules", eval.rules, "rules file (mtp, biogrer-star)");
    eval_cmd->add_option("--mode", eval.mode, "scorer for mtp: biogrer or biogrer-star");
    eval_cmd->add_option("--mix-lambda", eval.mix_lambda, "rule weight in biogrer-star");
    auto* o_eval_threshold =
        eval_cmd->add_option("--threshold", eval.threshold, "ptd decision threshold");
    auto* o_ks = eval_cmd->add_option("--ks", eval.ks, "hits@K cutoffs (default 1 3 10)");
    eval_cmd->add_option("--report", eval.report, "report JSON to write");
    eval_cmd->add_option("--csv", eval.csv, "single-row metric CSV for cross-run tabulation");
    auto* o_eval_seed = eval_cmd->add_option("--seed", eval.seed, "seed echoed in the report");
    auto* o_eval_threads = eval_cmd->add_option("--threads", eval.threads, "worker threads");
    eval_cmd->add_flag("--timestamp", eval.timestamp, "stamp the report with wall time");

    try {
        app.parse(argc, argv);

        if (!config_path.empty()) config.load(config_path);
        config.apply(o_synth_seed, "", "seed", synth.seed);
        config.apply(o_preset, "synth", "preset", synth.preset);
        config.apply(o_entities, "synth", "entities", synth.entities);
        config.apply(o_relations, "synth", "relations", synth.relations);
        config.apply(o_density, "synth", "density", synth.density);
        config.apply(o_noise, "synth", "noise_rate", synth.noise_rate);

        config.apply(o_beta, "mining", "beta", mine.beta);
        config.apply(o_min_support, "mining", "min_support", mine.min_support);
        config.apply(o_mine_cand, "paths", "candidates", mine.candidates);

        config.apply(o_n, "poison", "n", poison.n);
        config.apply(o_audit, "poison", "audit", poison.audit);
        config.apply(o_audit_out, "paths", "audit_out", poison.audit_out);
        config.apply(o_poison_seed, "", "seed", poison.seed);
        config.apply(o_poison_cand, "paths", "candidates", poison.candidates);

        config.apply(o_backend, "train", "backend", refine.backend);
        config.apply(o_dim, "train", "dim", refine.em.dim);
        config.apply(o_gamma, "train", "gamma", refine.em.gamma);
        config.apply(o_lr, "train", "learning_rate", refine.em.train.learning_rate);
        config.apply(o_epochs, "train", "epochs", refine.em.train.epochs);
        config.apply(o_negatives, "train", "negatives_per_positive",
                     refine.em.train.negatives_per_positive);
        config.apply(o_batch, "train", "batch_size", refine.em.train.batch_size);
        config.apply(o_delta, "em", "delta", refine.em.delta);
        config.apply(o_rounds, "em", "rounds", refine.em.rounds);
        config.apply(o_lambda, "em", "mix_lambda", refine.em.mix_lambda);
        config.apply(o_retrain, "em", "retrain_epochs", refine.em.retrain_epochs);
        config.apply(o_lr_w, "em", "weight_learning_rate", refine.em.weights.learning_rate);
        config.apply(o_epochs_w, "em", "weight_epochs", refine.em.weights.epochs);
        config.apply(o_mode, "em", "mode", refine.mode);
        config.apply(o_threshold, "eval", "threshold", refine.threshold);
        config.apply(o_refine_seed, "", "seed", refine.seed);
        config.apply(o_refine_threads, "", "threads", refine.threads);
        config.apply(o_manifest, "paths", "manifest", refine.manifest);
        config.apply(o_model_out, "paths", "model", refine.model_out);

        config.apply(o_task, "eval", "task", eval.task);
        config.apply(o_eval_threshold, "eval", "threshold", eval.threshold);
        config.apply(o_ks, "eval", "hits_ks", eval.ks);
        config.apply(o_eval_seed, "", "seed", eval.seed);
        config.apply(o_eval_threads, "", "threads", eval.threads);

        if (synth_cmd->parsed()) return run_synth(synth);
        if (mine_cmd->parsed()) return run_mine(mine);
        if (poison_cmd->parsed()) return run_poison(poison);
        if (refine_cmd->parsed()) return run_refine(refine);
        if (eval_cmd->parsed()) return run_eval(eval);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const kgr::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const kgr::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 3;
    } catch (const kgr::DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const kgr::ComputeError& e) {
        std::cerr << "compute error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
