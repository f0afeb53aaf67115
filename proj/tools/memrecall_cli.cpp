// memrecall: probing, intervention, dataset and analysis commands.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "memrecall/errors.hpp"
#include "memrecall/idiomem.hpp"
#include "memrecall/intervention.hpp"
#include "memrecall/lens.hpp"
#include "memrecall/model.hpp"
#include "memrecall/report.hpp"
#include "memrecall/rng.hpp"
#include "memrecall/safetensors.hpp"
#include "memrecall/stats.hpp"

namespace fs = std::filesystem;
using namespace memrecall;
using nlohmann::ordered_json;

namespace {

struct Settings {
    std::vector<std::string> model;
    std::vector<std::string> dataset;
    std::string wiki_corpus;
    std::string out;
    std::string probe_dir;
    std::string idioms;
    std::string embeddings;
    std::vector<std::string> scorer_table;
    std::string model_name;
    std::uint64_t seed = 0;
    std::string mode = "both";
    std::string scope = "last_position";
    std::size_t k = 10;
    std::size_t max_span = 3;
    std::size_t n_examples = 100;
    std::size_t n_wiki = 0;
    std::size_t sample = 0;
    std::size_t min_words = 4;
    std::size_t majority = 0;
    std::size_t folds = 10;
    double sim_threshold = 0.75;
    std::vector<std::string> feature_spec;
    bool apply_final_norm = false;
    bool include_embedding = false;
    bool include_full_prompt = false;
    std::string config;
};

// Effective configuration recorded in the manifest. Output location is left
// out so reruns into different directories share a manifest id.
ordered_json settings_json(const std::string& command, const Settings& s) {
    ordered_json j;
    j["model"] = s.model;
    j["dataset"] = s.dataset;
    if (command == "probe" || command == "freqcorr") j["wiki_corpus"] = s.wiki_corpus;
    if (command == "probe" || command == "facts") {
        j["apply_final_norm"] = s.apply_final_norm;
        j["include_embedding"] = s.include_embedding;
        j["n_wiki"] = s.n_wiki;
    }
    if (command == "facts") {
        j["idioms"] = s.idioms;
        j["sample"] = s.sample;
    }
    if (command == "intervene") {
        j["mode"] = s.mode;
        j["k"] = s.k;
        j["max_span"] = s.max_span;
        j["scope"] = s.scope;
        j["n_examples"] = s.n_examples;
    }
    if (command == "filter") {
        j["scorer_table"] = s.scorer_table;
        j["embeddings"] = s.embeddings;
        j["min_words"] = s.min_words;
        j["sim_threshold"] = s.sim_threshold;
        j["majority"] = s.majority;
        j["include_full_prompt"] = s.include_full_prompt;
    }
    if (command == "classify" || command == "freqcorr") {
        j["probe_dir"] = s.probe_dir;
        j["model_name"] = s.model_name;
    }
    if (command == "classify") {
        j["feature_spec"] = s.feature_spec;
        j["folds"] = s.folds;
    }
    return j;
}

// --- config file -------------------------------------------------------------

std::vector<std::pair<std::string, std::string>> read_config_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    std::vector<std::pair<std::string, std::string>> out;
    auto key_of = [](std::string k) {
        std::replace(k.begin(), k.end(), '_', '-');
        return k;
    };
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw UsageError("config file " + path.string() + ": " + e.what());
        }
        for (const auto& [k, v] : j.items()) {
            auto emit = [&](const nlohmann::json& x) {
                if (x.is_string())
                    out.emplace_back(key_of(k), x.get<std::string>());
                else if (x.is_boolean())
                    out.emplace_back(key_of(k), x.get<bool>() ? "true" : "false");
                else
                    out.emplace_back(key_of(k), x.dump());
            };
            if (v.is_array())
                for (const auto& x : v) emit(x);
            else
                emit(v);
        }
        return out;
    }
    std::istringstream lines(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("config file " + path.string() + ":" + std::to_string(lineno) + ": expected key=value");
        auto trim = [](std::string x) {
            const auto s = x.find_first_not_of(" \t\r");
            const auto e = x.find_last_not_of(" \t\r");
            return s == std::string::npos ? std::string() : x.substr(s, e - s + 1);
        };
        out.emplace_back(key_of(trim(line.substr(0, eq))), trim(line.substr(eq + 1)));
    }
    return out;
}

// Splices config-file entries into argv right after the subcommand, skipping
// keys that the command line sets itself.
std::vector<std::string> apply_config(const std::vector<std::string>& args) {
    std::optional<std::string> cfg;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) cfg = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) cfg = args[i].substr(9);
    }
    if (!cfg || args.size() < 2) return args;
    auto on_command_line = [&](const std::string& key) {
        const std::string flag = "--" + key;
        return std::any_of(args.begin(), args.end(),
                           [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
    };
    std::vector<std::string> extra;
    for (const auto& [key, value] : read_config_file(*cfg)) {
        if (key == "config" || on_command_line(key)) continue;
        if (value == "true" || value == "false") {
            if (value == "true") extra.push_back("--" + key);
            continue;
        }
        extra.push_back("--" + key);
        extra.push_back(value);
    }
    std::vector<std::string> out(args.begin(), args.begin() + 2);
    out.insert(out.end(), extra.begin(), extra.end());
    out.insert(out.end(), args.begin() + 2, args.end());
    return out;
}

// --- helpers -----------------------------------------------------------------

void log(const std::string& msg) { std::cerr << "memrecall: " << msg << '\n'; }

const std::string& single_model(const Settings& s) {
    if (s.model.size() != 1) throw UsageError("this command takes exactly one --model");
    return s.model.front();
}

std::string model_identifier(const fs::path& dir) {
    const auto weights = dir / "model.safetensors";
    std::string id = fs::path(dir).lexically_normal().filename().string();
    if (id.empty()) id = dir.string();
    if (fs::exists(weights)) id += "@" + report::sha256_file(weights).substr(0, 16);
    return id;
}

report::RunManifest make_manifest(const std::string& command, const Settings& s) {
    report::RunManifest m;
    m.command = command;
    m.config = settings_json(command, s);
    m.seed = s.seed;
    m.timestamp = report::utc_timestamp();
    m.tool_version = std::string(report::kToolVersion);
    return m;
}

void hash_inputs(report::RunManifest& m, const std::vector<std::string>& paths) {
    for (const auto& p : paths)
        if (!p.empty() && fs::is_regular_file(p)) m.dataset_hashes[p] = report::sha256_file(p);
}

Model open_model(const std::string& dir) {
    log("loading model " + dir);
    return load_model(dir);
}

std::vector<std::size_t> seeded_subset(std::size_t n, std::size_t take, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (take == 0 || take >= n) return idx;
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(take);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<double> layer_axis(std::size_t n_layers) {
    std::vector<double> x;
    for (std::size_t l = 1; l <= n_layers; ++l) x.push_back(static_cast<double>(l));
    return x;
}

// --- probe / facts -----------------------------------------------------------

struct ProbeSet {
    std::vector<ProbeItem> items;
    SetLabel hit;   // label when the model predicts the target
    SetLabel miss;  // label otherwise
};

void write_examples_csv(const fs::path& path, const std::vector<LensRecord>& records,
                        const std::map<std::string, const ProbeItem*>& items) {
    report::CsvWriter w(path, {"example_id", "set", "prompt", "target", "predicted_token", "target_token", "correct"});
    for (const auto& r : records) {
        const auto* it = items.at(r.example_id);
        w.row({r.example_id, to_string(r.set), it->prompt, it->target, std::to_string(r.predicted_token),
               std::to_string(r.target_token), r.correct ? "1" : "0"});
    }
    w.close();
}

std::string curves_svg(const std::vector<LayerCurve>& curves, std::size_t n_layers, const std::string& note) {
    std::vector<report::Series> prob, rank;
    const auto x = layer_axis(n_layers);
    for (const auto& c : curves) {
        const std::string label = to_string(c.set) + " (n=" + std::to_string(c.n) + ")";
        prob.push_back({label, x, std::vector<double>(c.mean_prob.begin() + 1, c.mean_prob.end())});
        rank.push_back({label, x, std::vector<double>(c.mean_rank.begin() + 1, c.mean_rank.end())});
    }
    return report::svg_panels({{{"Mean probability of the predicted token", "layer", "probability", false}, prob},
                               {{"Mean rank of the predicted token", "layer", "rank", true}, rank}},
                              note);
}

int run_probe(const std::string& command, const Settings& s, const std::vector<ProbeSet>& sets, const Model& model,
              report::RunManifest manifest) {
    const std::size_t L = model.config().n_layers;
    LensOptions opts;
    opts.apply_final_norm = s.apply_final_norm;

    std::vector<LensRecord> records;
    std::vector<std::vector<float>> hidden;
    std::map<std::string, const ProbeItem*> by_id;
    for (const auto& set : sets) {
        for (const auto& it : set.items)
            if (!by_id.emplace(it.id, &it).second) throw DataError("duplicate example id '" + it.id + "'");
        std::vector<std::vector<float>> h;
        auto recs = probe_all(model, set.items, set.hit, opts, &h);
        std::size_t hits = 0;
        for (auto& r : recs) {
            r.set = r.correct ? set.hit : set.miss;
            hits += r.correct;
        }
        if (set.hit != set.miss)
            log(to_string(set.hit) + ": " + std::to_string(hits) + " of " + std::to_string(recs.size()));
        else
            log(to_string(set.hit) + ": " + std::to_string(recs.size()) + " prompts");
        records.insert(records.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
        hidden.insert(hidden.end(), std::make_move_iterator(h.begin()), std::make_move_iterator(h.end()));
    }
    // Group by set for stable, readable output; stable_sort keeps input order within a set.
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return records[a].set < records[b].set; });
    std::vector<LensRecord> sorted;
    NamedTensor final_hidden{"final_hidden", {records.size(), model.config().d_model}, {}};
    ordered_json ids = ordered_json::array();
    for (auto i : order) {
        sorted.push_back(records[i]);
        final_hidden.values.insert(final_hidden.values.end(), hidden[i].begin(), hidden[i].end());
        ids.push_back(records[i].example_id);
    }

    const auto curves = aggregate_curves(sorted);
    const std::string note = command + " manifest " + manifest.id();

    report::OutputSet out(s.out);
    write_examples_csv(out.add("examples.csv"), sorted, by_id);
    write_probe_csv(out.add("probe_records.csv"), sorted, s.include_embedding);
    write_curves_csv(out.add("curves.csv"), curves, s.include_embedding);
    write_safetensors(out.add("final_hidden.safetensors"), {final_hidden}, {{"example_ids", ids.dump()}});
    report::write_text(out.add("curves.svg"), curves_svg(curves, L, note));
    report::finalize_outputs(out, manifest);
    log("wrote " + std::to_string(sorted.size()) + " records to " + s.out);
    return 0;
}

int cmd_probe(const Settings& s) {
    if (s.dataset.empty()) throw UsageError("probe needs --dataset");
    const auto model = open_model(single_model(s));
    auto manifest = make_manifest("probe", s);
    manifest.model = model_identifier(single_model(s));
    hash_inputs(manifest, s.dataset);
    hash_inputs(manifest, {s.wiki_corpus});

    const auto entries = load_idioms({s.dataset.begin(), s.dataset.end()});
    if (entries.empty()) throw DataError("dataset is empty");
    std::vector<ProbeSet> sets{{to_probe_items(entries), SetLabel::Mem, SetLabel::NonMem}};
    if (!s.wiki_corpus.empty()) {
        const auto docs = load_wiki_corpus(s.wiki_corpus);
        const std::size_t n = s.n_wiki ? s.n_wiki : entries.size();
        const auto wiki = sample_wiki_prompts(docs, prompt_length_histogram(entries), n, s.seed);
        sets.push_back({to_probe_items(wiki, "wiki"), SetLabel::Wiki, SetLabel::Wiki});
    }
    return run_probe("probe", s, sets, model, manifest);
}

int cmd_facts(const Settings& s) {
    if (s.dataset.size() != 1) throw UsageError("facts needs exactly one --dataset (facts JSONL)");
    const auto model = open_model(single_model(s));
    auto manifest = make_manifest("facts", s);
    manifest.model = model_identifier(single_model(s));
    hash_inputs(manifest, s.dataset);
    hash_inputs(manifest, {s.idioms});

    const auto all = load_facts(s.dataset.front());
    if (all.empty()) throw DataError("no end-blank, single-answer statements in " + s.dataset.front());
    std::vector<FactEntry> facts;
    for (auto i : seeded_subset(all.size(), s.sample, s.seed)) facts.push_back(all[i]);
    log("facts: " + std::to_string(facts.size()) + " statements");
    std::vector<ProbeSet> sets{{to_probe_items(facts), SetLabel::MemFact, SetLabel::NonMemFact}};
    if (!s.idioms.empty()) {
        const auto entries = load_idioms({s.idioms});
        if (entries.empty()) throw DataError("idiom dataset is empty");
        sets.push_back({to_probe_items(entries), SetLabel::Mem, SetLabel::NonMem});
    }
    return run_probe("facts", s, sets, model, manifest);
}

// --- intervene ---------------------------------------------------------------

int cmd_intervene(const Settings& s) {
    if (s.dataset.empty()) throw UsageError("intervene needs --dataset");
    std::vector<ZeroMode> modes;
    if (s.mode == "both")
        modes = {ZeroMode::Dominant, ZeroMode::NonDominant};
    else
        modes = {parse_zero_mode(s.mode)};
    const auto scope = parse_position_scope(s.scope);

    const auto model = open_model(single_model(s));
    const std::size_t L = model.config().n_layers;
    auto manifest = make_manifest("intervene", s);
    manifest.model = model_identifier(single_model(s));
    hash_inputs(manifest, s.dataset);

    const auto entries = load_idioms({s.dataset.begin(), s.dataset.end()});
    if (entries.empty()) throw DataError("dataset is empty");
    const auto [mem, non_mem] = split_memorized(to_probe_items(entries), ModelPredictor(model));
    if (mem.empty()) throw DataError("the model memorizes none of the dataset's examples");
    std::vector<ProbeItem> examples;
    for (auto i : seeded_subset(mem.size(), s.n_examples, s.seed)) examples.push_back(mem[i]);
    log("intervening on " + std::to_string(examples.size()) + " of " + std::to_string(mem.size()) +
        " memorized examples");

    const auto results = sweep_ranges(model, examples, s.max_span, modes, s.k, scope);
    const std::string note = "intervene manifest " + manifest.id() + ", scope " + to_string(scope);

    report::OutputSet out(s.out);
    {
        report::CsvWriter w(out.add("examples.csv"), {"example_id", "prompt", "target"});
        for (const auto& e : examples) w.row({e.id, e.prompt, e.target});
        w.close();
    }
    write_sweep_csv(out.add("sweep.csv"), results);
    write_intervention_rows_csv(out.add("intervention_rows.csv"), results);

    struct Metric {
        const char* key;
        const char* label;
        double InterventionResult::*field;
    };
    const Metric metrics[] = {{"pct_changed", "% predictions changed", &InterventionResult::pct_changed},
                              {"rank_delta", "mean target rank change", &InterventionResult::mean_rank_delta},
                              {"prob_delta", "mean target probability change", &InterventionResult::mean_prob_delta}};
    for (auto mode : modes) {
        for (const auto& m : metrics) {
            std::vector<report::HeatmapCell> cells;
            for (const auto& r : results)
                if (r.spec.mode == mode) cells.push_back({r.spec.start_layer, r.spec.end_layer, r.*m.field});
            const std::string title = std::string(m.label) + ", " + to_string(mode) + " zeroing (k=" +
                                      std::to_string(s.k) + ")";
            report::write_text(out.add("heatmap_" + std::string(m.key) + "_" + to_string(mode) + ".svg"),
                               report::svg_heatmap(title, L, cells, m.label, note));
        }
    }
    if (s.max_span >= 3 && L >= 3) {
        std::vector<report::Series> pct, rank;
        for (auto mode : modes) {
            report::Series a{to_string(mode), {}, {}}, b{to_string(mode), {}, {}};
            for (const auto& r : results)
                if (r.spec.mode == mode && r.spec.end_layer - r.spec.start_layer == 2) {
                    a.x.push_back(static_cast<double>(r.spec.start_layer));
                    a.y.push_back(r.pct_changed);
                    b.x.push_back(static_cast<double>(r.spec.start_layer));
                    b.y.push_back(r.mean_rank_delta);
                }
            pct.push_back(std::move(a));
            rank.push_back(std::move(b));
        }
        report::write_text(out.add("span3.svg"),
                           report::svg_panels({{{"3-layer spans: % changed", "first layer", "% changed", false}, pct},
                                               {{"3-layer spans: target rank change", "first layer", "rank change",
                                                 false},
                                                rank}},
                                              note));
    }
    report::finalize_outputs(out, manifest);
    log("wrote " + std::to_string(results.size()) + " cells to " + s.out);
    return 0;
}

// --- filter ------------------------------------------------------------------

int cmd_filter(const Settings& s) {
    if (s.dataset.empty()) throw UsageError("filter needs at least one --dataset (idiom source JSONL)");
    auto manifest = make_manifest("filter", s);
    hash_inputs(manifest, s.dataset);
    hash_inputs(manifest, s.scorer_table);
    hash_inputs(manifest, {s.embeddings});

    std::vector<Model> models;
    models.reserve(s.model.size());
    std::vector<std::string> model_ids;
    for (const auto& dir : s.model) {
        models.push_back(open_model(dir));
        model_ids.push_back(model_identifier(dir));
    }
    std::vector<std::unique_ptr<CompletionScorer>> owned;
    for (std::size_t i = 0; i < models.size(); ++i)
        owned.push_back(std::make_unique<ModelScorer>(models[i], model_ids[i]));
    for (const auto& t : s.scorer_table) owned.push_back(std::make_unique<TableScorer>(TableScorer::load(t, t)));
    std::vector<const CompletionScorer*> scorers;
    for (const auto& o : owned) scorers.push_back(o.get());
    for (std::size_t i = 0; i < model_ids.size(); ++i) manifest.model += (i ? "," : "") + model_ids[i];

    std::optional<WordEmbeddingTable> table;
    if (!s.embeddings.empty()) table = WordEmbeddingTable::load(s.embeddings);

    const auto entries = load_idioms({s.dataset.begin(), s.dataset.end()});
    BuildConfig cfg;
    cfg.min_words = s.min_words;
    cfg.predictable.majority = s.majority;
    cfg.predictable.include_full_prompt = s.include_full_prompt;
    cfg.sim_threshold = s.sim_threshold;
    const auto [kept, rep] = build_idiomem(entries, scorers, table ? &*table : nullptr, cfg);
    log("filter: kept " + std::to_string(kept.size()) + " of " + std::to_string(entries.size()) + " idioms");

    report::OutputSet out(s.out);
    write_idioms_jsonl(out.add("idiomem.jsonl"), kept);
    write_filter_report_csv(out.add("filter_report.csv"), rep);
    write_filter_examples_csv(out.add("filter_examples.csv"), rep, s.sim_threshold);
    write_filter_summary_csv(out.add("filter_summary.csv"), rep);
    report::finalize_outputs(out, manifest);
    return 0;
}

// --- classify / freqcorr -------------------------------------------------------

struct ProbeInputs {
    fs::path dir;
    std::vector<LensRecord> records;
    std::string model;
    std::size_t n_layers = 0;
};

ProbeInputs load_probe_inputs(const Settings& s) {
    ProbeInputs in;
    in.dir = s.probe_dir.empty() ? fs::path(s.out) : fs::path(s.probe_dir);
    const auto probe = in.dir / "probe_records.csv", examples = in.dir / "examples.csv";
    if (!fs::exists(probe) || !fs::exists(examples))
        throw DataError("no probe records in " + in.dir.string() +
                        " (expected probe_records.csv and examples.csv); run `memrecall probe --out " +
                        in.dir.string() + "` first");
    const auto table = report::read_csv(probe);
    const auto c_layer = table.column("layer");
    for (const auto& row : table.rows) in.n_layers = std::max<std::size_t>(in.n_layers, std::stoul(row[c_layer]));
    if (in.n_layers == 0) throw DataError(probe.string() + " holds no layer records");
    in.records = read_probe_records(probe, examples, in.n_layers);
    in.model = s.model_name;
    if (in.model.empty() && fs::exists(in.dir / "manifest.json")) {
        std::ifstream f(in.dir / "manifest.json");
        const auto j = nlohmann::json::parse(f, nullptr, false);
        if (j.is_object() && j.contains("model") && j["model"].is_string()) in.model = j["model"].get<std::string>();
    }
    if (in.model.empty()) in.model = "model";
    return in;
}

int cmd_classify(const Settings& s) {
    auto in = load_probe_inputs(s);
    auto manifest = make_manifest("classify", s);
    manifest.model = in.model;
    hash_inputs(manifest, {(in.dir / "probe_records.csv").string(), (in.dir / "examples.csv").string()});

    std::vector<FeatureSpec> specs;
    if (s.feature_spec.empty() || (s.feature_spec.size() == 1 && s.feature_spec.front() == "all"))
        specs = all_feature_specs();
    else
        for (const auto& f : s.feature_spec) specs.push_back(parse_feature_spec(f));

    std::optional<std::map<std::string, std::vector<float>>> hidden;
    if (std::find(specs.begin(), specs.end(), FeatureSpec::FinalHiddenState) != specs.end()) {
        const auto path = in.dir / "final_hidden.safetensors";
        if (!fs::exists(path))
            throw DataError("final_hidden_state features need " + path.string() + "; rerun `memrecall probe`");
        hash_inputs(manifest, {path.string()});
        SafetensorsReader reader(path);
        const auto& info = reader.info("final_hidden");
        const auto values = reader.read_f32("final_hidden");
        const auto ids = nlohmann::json::parse(reader.metadata().at("example_ids"));
        if (info.shape.size() != 2 || ids.size() != info.shape[0])
            throw DataError(path.string() + ": example_ids do not match the tensor rows");
        hidden.emplace();
        const std::size_t d = info.shape[1];
        for (std::size_t i = 0; i < ids.size(); ++i)
            (*hidden)[ids[i].get<std::string>()] =
                std::vector<float>(values.begin() + static_cast<std::ptrdiff_t>(i * d),
                                   values.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    }

    std::vector<ClassifierRow> rows;
    for (auto spec : specs) {
        const auto X = extract_features(in.records, hidden ? &*hidden : nullptr, spec, s.seed);
        const auto cv = train_eval_classifier(X, s.folds, 0.8, s.seed);
        log(to_string(spec) + ": " + report::fmt(cv.mean_accuracy) + " +- " + report::fmt(cv.std_accuracy));
        rows.push_back({in.model, spec, cv, s.seed});
    }

    report::OutputSet out(s.out);
    write_classifier_csv(out.add("classifier.csv"), rows);
    {
        report::CsvWriter w(out.add("classifier_folds.csv"), {"model", "feature_spec", "fold", "accuracy"});
        for (const auto& r : rows)
            for (std::size_t f = 0; f < r.result.fold_accuracies.size(); ++f)
                w.row({r.model, to_string(r.spec), std::to_string(f), report::fmt(r.result.fold_accuracies[f])});
        w.close();
    }
    report::finalize_outputs(out, manifest);
    return 0;
}

int cmd_freqcorr(const Settings& s) {
    if (s.wiki_corpus.empty()) throw UsageError("freqcorr needs --wiki-corpus (frequency corpus)");
    auto in = load_probe_inputs(s);
    const auto model = open_model(single_model(s));
    auto manifest = make_manifest("freqcorr", s);
    manifest.model = in.model;
    hash_inputs(manifest, {(in.dir / "probe_records.csv").string(), (in.dir / "examples.csv").string(),
                           s.wiki_corpus});

    const auto freq = token_frequencies(s.wiki_corpus, model.tokenizer(), model.config().vocab_size);
    log("corpus tokens: " + std::to_string(freq.total));
    std::vector<const LensRecord*> recs;
    for (const auto& r : in.records)
        if (r.set == SetLabel::Mem || r.set == SetLabel::NonMem) recs.push_back(&r);
    if (recs.empty()) throw DataError("probe records hold no mem or non-mem examples");
    std::vector<double> x, y;
    for (const auto* r : recs) {
        x.push_back(static_cast<double>(r->rank[1]));
        y.push_back(freq.frequency(r->predicted_token));
    }
    const auto c = pearson(x, y);
    log("pearson r = " + report::fmt(c.r) + ", p = " + report::fmt(c.p));

    report::OutputSet out(s.out);
    write_correlation_csv(out.add("correlation.csv"), in.model, c);
    {
        report::CsvWriter w(out.add("freqcorr_points.csv"),
                            {"example_id", "predicted_token", "rank_layer1", "frequency"});
        for (std::size_t i = 0; i < recs.size(); ++i)
            w.row({recs[i]->example_id, std::to_string(recs[i]->predicted_token), std::to_string(recs[i]->rank[1]),
                   report::fmt(y[i])});
        w.close();
    }
    report::finalize_outputs(out, manifest);
    return 0;
}

// --- options -----------------------------------------------------------------

enum Opt : unsigned {
    kModel = 1u << 0,
    kModels = 1u << 1,
    kDataset = 1u << 2,
    kWiki = 1u << 3,
    kLens = 1u << 4,
    kSweep = 1u << 5,
    kFilter = 1u << 6,
    kProbeDir = 1u << 7,
    kClassify = 1u << 8,
    kFacts = 1u << 9,
};

CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& help, Settings& s, unsigned opts) {
    auto* c = app.add_subcommand(name, help);
    c->add_option("--out", s.out, "Output directory")->required();
    c->add_option("--seed", s.seed, "Random seed")->capture_default_str();
    c->add_option("--config", s.config, "Config file (key=value lines or a JSON object); flags override it");
    if (opts & kModel) c->add_option("--model", s.model, "Model directory")->expected(1);
    if (opts & kModels) c->add_option("--model", s.model, "Scorer model directory (repeatable)");
    if (opts & kDataset) c->add_option("--dataset", s.dataset, "Input JSONL (repeatable)");
    if (opts & kWiki) c->add_option("--wiki-corpus", s.wiki_corpus, "Plain-text corpus, one document per line");
    if (opts & kLens) {
        c->add_flag("--apply-final-norm", s.apply_final_norm, "Apply the final layer norm before the lens");
        c->add_flag("--include-embedding", s.include_embedding, "Also report layer 0 (the embedding output)");
        c->add_option("--n-wiki", s.n_wiki, "Wiki control prompts (0: dataset size)");
    }
    if (opts & kFacts) {
        c->add_option("--idioms", s.idioms, "Idiom JSONL probed alongside the facts");
        c->add_option("--sample", s.sample, "Seeded subsample size (0: all)");
    }
    if (opts & kSweep) {
        c->add_option("--mode", s.mode, "dominant, non_dominant or both")->capture_default_str();
        c->add_option("--k", s.k, "Dominant sub-updates per layer")->capture_default_str();
        c->add_option("--max-span", s.max_span, "Longest layer range")->capture_default_str();
        c->add_option("--scope", s.scope, "last_position or all_positions")->capture_default_str();
        c->add_option("--n-examples", s.n_examples, "Memorized examples to sample (0: all)")->capture_default_str();
    }
    if (opts & kFilter) {
        c->add_option("--scorer-table", s.scorer_table, "TSV of precomputed completions (repeatable)");
        c->add_option("--embeddings", s.embeddings, "GloVe-format word vectors");
        c->add_option("--min-words", s.min_words, "Minimum idiom length in words (0 disables)")
            ->capture_default_str();
        c->add_option("--sim-threshold", s.sim_threshold, "Cosine similarity threshold")->capture_default_str();
        c->add_option("--majority", s.majority, "Scorer hits needed to drop (0: ceil(0.75 * scorers))");
        c->add_flag("--include-full-prompt", s.include_full_prompt, "Also score the whole prompt as an n-gram");
    }
    if (opts & kProbeDir) {
        c->add_option("--probe-dir", s.probe_dir, "Output directory of a probe run (default: --out)");
        c->add_option("--model-name", s.model_name, "Model label in reports");
    }
    if (opts & kClassify) {
        c->add_option("--feature-spec", s.feature_spec, "Feature set (repeatable; default all)");
        c->add_option("--folds", s.folds, "Repeated random splits")->capture_default_str();
    }
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    Settings s;
    CLI::App app{"Memory-recall probing for GPT-2 style language models"};
    app.require_subcommand(1);
    auto* probe = add_command(app, "probe", "Logit-lens profiles of memorized, non-memorized and wiki prompts", s,
                              kModel | kDataset | kWiki | kLens);
    auto* intervene = add_command(app, "intervene", "Zero FFN sub-updates over layer ranges", s,
                                  kModel | kDataset | kSweep);
    auto* filter = add_command(app, "filter", "Build an idiom dataset from raw sources", s,
                               kModels | kDataset | kFilter);
    auto* classify = add_command(app, "classify", "Memorized vs non-memorized classifier over probe records", s,
                                 kProbeDir | kClassify);
    auto* freqcorr = add_command(app, "freqcorr", "Correlate first-layer rank with corpus token frequency", s,
                                 kModel | kWiki | kProbeDir);
    auto* facts = add_command(app, "facts", "Logit-lens profiles of cloze facts", s,
                              kModel | kDataset | kLens | kFacts);

    try {
        args = apply_config(args);
    } catch (const UsageError& e) {
        std::cerr << "memrecall: " << e.what() << '\n';
        return 1;
    }
    std::vector<char*> cargs;
    for (auto& a : args) cargs.push_back(a.data());
    try {
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*probe) return cmd_probe(s);
        if (*intervene) return cmd_intervene(s);
        if (*filter) return cmd_filter(s);
        if (*classify) return cmd_classify(s);
        if (*freqcorr) return cmd_freqcorr(s);
        if (*facts) return cmd_facts(s);
    } catch (const UsageError& e) {
        std::cerr << "memrecall: usage error: " << e.what() << '\n';
        return 1;
    } catch (const ModelError& e) {
        std::cerr << "memrecall: model error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "memrecall: data error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
