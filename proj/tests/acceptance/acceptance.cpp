// Acceptance suite. `acceptance` prints one line per criterion; `acceptance --criterion N`
// runs one and exits 0 (PASS), 1 (FAIL) or 77 (BLOCKED: external assets not configured).
//
// External assets are located through environment variables:
//   MEMRECALL_GPT2_SMALL, MEMRECALL_GPT2_MEDIUM   model directories
//   MEMRECALL_GPT2_SMALL_REFERENCE                reference logits (default: fixtures/gpt2_small_reference.json)
//   MEMRECALL_IDIOMEM                             released IdioMem JSONL
//   MEMRECALL_IDIOM_SOURCES                       directory of raw idiom source JSONL files
//   MEMRECALL_GLOVE                               GloVe-format word vectors
//   MEMRECALL_WIKI                                plain-text corpus, one document per line
//   MEMRECALL_FACTS                               cloze statements JSONL

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "memrecall/model.hpp"
#include "memrecall/report.hpp"
#include "memrecall/stats.hpp"
#include "memrecall/zeroing.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace memrecall;

namespace {

enum class Status { Pass, Fail, Blocked };

struct Outcome {
    Status status;
    std::string detail;
};

Outcome pass(std::string d) { return {Status::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::Fail, std::move(d)}; }
Outcome blocked(std::string d) { return {Status::Blocked, std::move(d)}; }

struct Blocked {
    std::string what;
};

// Path from an environment variable; throws Blocked when unset or missing.
fs::path asset(const char* var) {
    const char* v = std::getenv(var);
    if (!v || !*v) throw Blocked{var + std::string(" not set")};
    if (!fs::exists(v)) throw Blocked{var + std::string("=") + v + " does not exist"};
    return v;
}

std::string num(double v, int prec = 4) {
    std::ostringstream s;
    s.precision(prec);
    s << v;
    return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- CLI plumbing ------------------------------------------------------------

struct Work {
    testing::TempDir dir{"acceptance"};
    std::map<std::string, fs::path> cache;  // probe directories reused within one process
};

Work& work() {
    static Work w;
    return w;
}

void cli(const std::vector<std::string>& args) {
    const auto r = testing::run_command(MEMRECALL_CLI, args);
    if (r.exit_code != 0)
        throw std::runtime_error("memrecall " + args.front() + " exited " + std::to_string(r.exit_code) + ": " +
                                 r.output);
}

report::CsvTable csv(const fs::path& p) { return report::read_csv(p); }

// Probe of the released IdioMem on GPT-2-medium with wiki controls.
fs::path medium_probe() {
    auto& w = work();
    if (auto it = w.cache.find("probe"); it != w.cache.end()) return it->second;
    const auto model = asset("MEMRECALL_GPT2_MEDIUM"), idiomem = asset("MEMRECALL_IDIOMEM"),
               wiki = asset("MEMRECALL_WIKI");
    const auto out = w.dir / "probe_medium";
    cli({"probe", "--model", model.string(), "--dataset", idiomem.string(), "--wiki-corpus", wiki.string(), "--out",
         out.string()});
    return w.cache["probe"] = out;
}

struct Curve {
    std::vector<double> rank, prob;  // index = layer, [0] unused
};

std::map<std::string, Curve> read_curves(const fs::path& path) {
    const auto t = csv(path);
    const auto c_set = t.column("set"), c_layer = t.column("layer"), c_rank = t.column("mean_rank"),
               c_prob = t.column("mean_prob");
    std::map<std::string, Curve> out;
    for (const auto& row : t.rows) {
        auto& c = out[row[c_set]];
        const auto l = std::stoul(row[c_layer]);
        if (c.rank.size() <= l) c.rank.resize(l + 1), c.prob.resize(l + 1);
        c.rank[l] = std::stod(row[c_rank]);
        c.prob[l] = std::stod(row[c_prob]);
    }
    return out;
}

// --- criteria ----------------------------------------------------------------

Outcome engine_fidelity() {
    const auto dir = asset("MEMRECALL_GPT2_SMALL");
    fs::path ref = testing::fixture("gpt2_small_reference.json");
    if (const char* v = std::getenv("MEMRECALL_GPT2_SMALL_REFERENCE"); v && *v) ref = v;
    if (!fs::exists(ref))
        throw Blocked{"reference " + ref.string() + " missing (tools/scripts/make_gpt2_reference.py writes it)"};
    const auto model = load_model(dir);
    const auto j = testing::load_json(ref);
    std::string problems;
    double worst_diff = 0, worst_time = 0;
    for (const auto& c : j["cases"]) {
        const auto text = c["text"].get<std::string>();
        const auto ids = model.tokenizer().encode(text);
        if (ids != c["ids"].get<std::vector<TokenId>>()) problems += " tokenization differs for '" + text + "';";
        const auto t0 = std::chrono::steady_clock::now();
        const auto logits = model.forward_trace(ids).logits;
        worst_time = std::max(worst_time, seconds_since(t0));
        const auto expect = testing::to_floats(c["logits"]);
        worst_diff = std::max(worst_diff, static_cast<double>(testing::max_abs_diff(logits, expect)));
        std::vector<std::size_t> order(logits.size());
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + 5, order.end(),
                          [&](auto a, auto b) { return logits[a] > logits[b] || (logits[a] == logits[b] && a < b); });
        const std::set<std::size_t> top5(order.begin(), order.begin() + 5);
        const auto ref_top5 = c["top5"].get<std::vector<std::size_t>>();
        if (order[0] != ref_top5.front()) problems += " top-1 differs for '" + text + "';";
        if (top5 != std::set<std::size_t>(ref_top5.begin(), ref_top5.end()))
            problems += " top-5 differs for '" + text + "';";
    }
    const std::string d = "max |dlogit| " + num(worst_diff) + ", slowest prompt " + num(worst_time, 3) + " s";
    if (worst_diff >= 1e-3) problems += " logits exceed 1e-3;";
    if (worst_time >= 5.0) problems += " runtime over 5 s;";
    return problems.empty() ? pass(d) : fail(d + ";" + problems);
}

Outcome decomposition_oracle() {
    const auto& model = testing::mini_model();
    const auto& cfg = model.config();
    std::mt19937 g(20240601);
    std::normal_distribution<float> normal(0.f, 1.f);
    std::uniform_int_distribution<std::size_t> layer(1, cfg.n_layers), k(0, cfg.d_ff + 2);
    double worst = 0;
    std::size_t complement_failures = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto l = layer(g);
        std::vector<float> h(cfg.d_model);
        for (auto& x : h) x = 3.f * normal(g);
        const auto ffn = model.ffn_sublayer(h, l);
        const auto& w = model.weights().layers[l - 1];
        std::vector<double> sum(w.ffn_out_bias.begin(), w.ffn_out_bias.end());
        for (std::size_t j = 0; j < cfg.d_ff; ++j)
            for (std::size_t c = 0; c < cfg.d_model; ++c) sum[c] += double(ffn.coeffs[j]) * w.ffn_out.row(j)[c];
        double err = 0, scale = 0;
        for (std::size_t c = 0; c < cfg.d_model; ++c) {
            err = std::max(err, std::abs(ffn.output[c] - sum[c]));
            scale = std::max(scale, std::abs(sum[c]));
        }
        worst = std::max(worst, err / std::max(scale, 1e-12));

        const auto scores = dominance_scores(ffn.coeffs, model.value_norms(l));
        const auto kk = k(g);
        auto dom = ffn.coeffs, rest = ffn.coeffs;
        apply_zeroing(dom, scores, ZeroMode::Dominant, kk);
        apply_zeroing(rest, scores, ZeroMode::NonDominant, kk);
        for (std::size_t j = 0; j < cfg.d_ff; ++j)
            if ((dom[j] != 0.f && rest[j] != 0.f) || dom[j] + rest[j] != ffn.coeffs[j]) {
                ++complement_failures;
                break;
            }
    }
    const std::string d = "1000 cases, max relative error " + num(worst, 3) + ", complementarity failures " +
                          std::to_string(complement_failures);
    return worst <= 1e-4 && complement_failures == 0 ? pass(d) : fail(d);
}

Outcome two_phase_profile() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto dir = medium_probe();
    const double elapsed = seconds_since(t0);
    const auto curves = read_curves(dir / "curves.csv");
    if (!curves.count("mem") || !curves.count("wiki")) return fail("curves lack the mem or wiki set");
    const auto& mem = curves.at("mem");
    const auto& wiki = curves.at("wiki");
    const std::size_t L = mem.prob.size() - 1;
    std::size_t first = 0;
    for (std::size_t l = 1; l <= L && !first; ++l)
        if (mem.rank[l] < 10) first = l;
    std::string d = "mem final prob " + num(mem.prob[L]) + ", wiki final prob " + num(wiki.prob[L]) +
                    ", mem rank < 10 from layer " + std::to_string(first) +
                    (first ? " (prob there " + num(mem.prob[first]) + ")" : "") + ", probe " + num(elapsed, 3) + " s";
    const bool ok = mem.prob[L] > 0.5 && wiki.prob[L] < 0.35 && first && first <= 20 && mem.prob[first] < 0.3 &&
                    elapsed < 30 * 60;
    return ok ? pass(d) : fail(d);
}

Outcome memorized_split() {
    const auto t = csv(medium_probe() / "examples.csv");
    const auto c_set = t.column("set");
    std::size_t mem = 0, idioms = 0;
    for (const auto& row : t.rows) {
        mem += row[c_set] == "mem";
        idioms += row[c_set] == "mem" || row[c_set] == "non-mem";
    }
    if (idioms == 0) return fail("no idioms probed");
    const double pct = 100.0 * mem / idioms;
    const std::string d = std::to_string(mem) + " of " + std::to_string(idioms) + " memorized (" + num(pct) + "%)";
    return pct >= 35 && pct <= 55 ? pass(d) : fail(d);
}

Outcome intervention_profile() {
    const auto model = asset("MEMRECALL_GPT2_MEDIUM"), idiomem = asset("MEMRECALL_IDIOMEM");
    const auto out = work().dir / "intervene", noop = work().dir / "intervene_noop";
    const auto t0 = std::chrono::steady_clock::now();
    cli({"intervene", "--model", model.string(), "--dataset", idiomem.string(), "--mode", "both", "--max-span", "1",
         "--n-examples", "100", "--out", out.string()});
    const double elapsed = seconds_since(t0);
    cli({"intervene", "--model", model.string(), "--dataset", idiomem.string(), "--mode", "dominant", "--k", "0",
         "--max-span", "1", "--n-examples", "100", "--out", noop.string()});

    const auto t = csv(out / "sweep.csv");
    const auto c_start = t.column("start_layer"), c_mode = t.column("mode"), c_pct = t.column("pct_changed"),
               c_rank = t.column("mean_rank_delta");
    std::size_t L = 0;
    for (const auto& row : t.rows) L = std::max<std::size_t>(L, std::stoul(row[c_start]));
    double first_pct = -1, first_rank = -1, late_max = 0;
    for (const auto& row : t.rows) {
        const auto l = std::stoul(row[c_start]);
        if (l == 1 && row[c_mode] == "non_dominant") {
            first_pct = std::stod(row[c_pct]);
            first_rank = std::stod(row[c_rank]);
        }
        if (3 * (l - 1) >= 2 * L) late_max = std::max(late_max, std::stod(row[c_pct]));
    }
    double noop_max = 0;
    const auto n = csv(noop / "sweep.csv");
    for (const auto& row : n.rows) noop_max = std::max(noop_max, std::stod(row[n.column("pct_changed")]));

    const std::string d = "layer-1 non-dominant " + num(first_pct) + "% changed, rank +" + num(first_rank) +
                          "; last-third max " + num(late_max) + "%; no-op max " + num(noop_max) + "%; " +
                          std::to_string(t.rows.size()) + " cells in " + num(elapsed, 3) + " s";
    const bool ok =
        first_pct >= 90 && first_rank > 1000 && late_max < 20 && noop_max == 0 && elapsed < 15 * 60;
    return ok ? pass(d) : fail(d);
}

Outcome classifier() {
    const auto probe = medium_probe();
    const auto out = work().dir / "classify";
    cli({"classify", "--probe-dir", probe.string(), "--feature-spec", "probs_all_layers", "--feature-spec", "random",
         "--out", out.string()});
    const auto t = csv(out / "classifier.csv");
    std::map<std::string, double> acc;
    for (const auto& row : t.rows) acc[row[t.column("feature_spec")]] = std::stod(row[t.column("mean_acc")]);
    const double probs = acc["probs_all_layers"], random = acc["random"];
    const std::string d = "probs_all_layers " + num(probs) + ", random " + num(random);
    return probs >= 0.75 && random >= 0.40 && random <= 0.60 ? pass(d) : fail(d);
}

Outcome correlation() {
    std::mt19937 g(7);
    std::normal_distribution<double> normal(0, 1);
    std::vector<double> x(1000), y(1000);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = normal(g);
        y[i] = 2.5 * x[i] - 4;
    }
    const auto synthetic = pearson(x, y);
    const bool synthetic_ok = std::abs(synthetic.r - 1.0) <= 1e-10;
    std::string d = "synthetic r - 1 = " + num(synthetic.r - 1.0, 3);
    if (!synthetic_ok) return fail(d);
    try {
        const auto probe = medium_probe();
        const auto out = work().dir / "freqcorr";
        cli({"freqcorr", "--model", asset("MEMRECALL_GPT2_MEDIUM").string(), "--wiki-corpus",
             asset("MEMRECALL_WIKI").string(), "--probe-dir", probe.string(), "--out", out.string()});
        const auto t = csv(out / "correlation.csv");
        const double r = std::stod(t.rows.at(0)[t.column("r")]);
        d += "; first-layer rank vs frequency r = " + num(r) + " (" + (r < 0 ? "negative, as published" : "positive") +
             ")";
        return std::abs(r) < 0.35 ? pass(d) : fail(d);
    } catch (const Blocked& b) {
        return blocked(d + " (synthetic part passes); " + b.what);
    }
}

Outcome filter_pipeline() {
    const auto sources_dir = asset("MEMRECALL_IDIOM_SOURCES");
    const auto small = asset("MEMRECALL_GPT2_SMALL"), medium = asset("MEMRECALL_GPT2_MEDIUM"),
               glove = asset("MEMRECALL_GLOVE");
    std::vector<std::string> sources;
    for (const auto& e : fs::directory_iterator(sources_dir))
        if (e.path().extension() == ".jsonl") sources.push_back(e.path().string());
    std::sort(sources.begin(), sources.end());
    if (sources.empty()) throw Blocked{"no .jsonl files in " + sources_dir.string()};

    const auto out = work().dir / "filter", again = work().dir / "filter_again";
    std::vector<std::string> args{"filter", "--model", small.string(), "--model", medium.string(), "--embeddings",
                                  glove.string(), "--out", out.string()};
    for (const auto& s : sources) args.insert(args.end(), {"--dataset", s});
    cli(args);

    std::string problems;
    const auto summary = csv(out / "filter_summary.csv");
    double length_pct = -1;
    std::size_t dropped = 0, kept = 0, total = 0;
    for (const auto& row : summary.rows) {
        if (row[0] == "length") length_pct = std::stod(row[2]);
        if (row[0] == "dropped") dropped = std::stoul(row[1]);
        if (row[0] == "kept") kept = std::stoul(row[1]);
        if (row[0] == "length" || row[0] == "predictable" || row[0] == "similarity") total += std::stoul(row[1]);
    }
    if (length_pct < 40 || length_pct > 55) problems += " length drop " + num(length_pct) + "% outside 40-55;";
    if (total != dropped) problems += " per-filter counts do not sum to dropped;";

    const std::map<std::string, std::string> expected{
        {"make a mountain out of a molehill", "none"},     {"think outside the box", "none"},
        {"there's no such thing as a free lunch", "none"}, {"go back to the drawing board", "predictable"},
        {"boys will be boys", "similarity"},               {"take it or leave it", "predictable"}};
    const auto report = csv(out / "filter_report.csv");
    std::map<std::string, std::string> routed;
    for (const auto& row : report.rows) {
        std::string idiom = row[0];
        std::transform(idiom.begin(), idiom.end(), idiom.begin(), [](unsigned char c) { return std::tolower(c); });
        if (expected.count(idiom)) routed[idiom] = row[3];
    }
    for (const auto& [idiom, filter] : expected) {
        if (!routed.count(idiom))
            problems += " '" + idiom + "' absent from sources;";
        else if (routed[idiom] != filter)
            problems += " '" + idiom + "' routed to " + routed[idiom] + ";";
    }
    if (report.rows.size() != dropped + kept) problems += " report rows do not match summary;";

    // Fixed point: the filtered dataset passes the same filters unchanged.
    cli({"filter", "--model", small.string(), "--model", medium.string(), "--embeddings", glove.string(), "--dataset",
         (out / "idiomem.jsonl").string(), "--out", again.string()});
    if (testing::read_file(out / "idiomem.jsonl") != testing::read_file(again / "idiomem.jsonl"))
        problems += " filtered set is not a fixed point;";

    const std::string d = "length drop " + num(length_pct) + "%, kept " + std::to_string(kept) + " of " +
                          std::to_string(kept + dropped);
    return problems.empty() ? pass(d) : fail(d + ";" + problems);
}

Outcome facts_profile() {
    const auto model = asset("MEMRECALL_GPT2_MEDIUM"), facts = asset("MEMRECALL_FACTS"),
               idiomem = asset("MEMRECALL_IDIOMEM");
    const auto out = work().dir / "facts";
    cli({"facts", "--model", model.string(), "--dataset", facts.string(), "--idioms", idiomem.string(), "--out",
         out.string()});
    const auto ex = csv(out / "examples.csv");
    std::size_t n_facts = 0;
    for (const auto& row : ex.rows) n_facts += row[ex.column("set")].find("fact") != std::string::npos;
    if (n_facts < 500)
        throw Blocked{"only " + std::to_string(n_facts) + " end-blank statements in MEMRECALL_FACTS (need 500)"};
    const auto curves = read_curves(out / "curves.csv");
    if (!curves.count("mem-fact") || !curves.count("mem")) return fail("no memorized facts or idioms");
    auto drop = [](const Curve& c) {
        const std::size_t L = c.prob.size() - 1;
        return c.prob[L - 2] - c.prob[L];
    };
    const double fact_drop = drop(curves.at("mem-fact")), idiom_drop = drop(curves.at("mem"));
    const std::string d = std::to_string(n_facts) + " statements; peak-final drop facts " + num(fact_drop) +
                          ", idioms " + num(idiom_drop);
    return fact_drop > 0.1 && idiom_drop < 0.05 ? pass(d) : fail(d);
}

const char* kIdioms =
    R"({"prompt": "think outside the", "target": "box", "source": "magpie"}
{"prompt": "go back to the drawing", "target": "board", "source": "epie"}
{"prompt": "boys will be", "target": "boys", "source": "lidioms"}
{"prompt": "in one ear and out the", "target": "other", "source": "ef"}
{"prompt": "take it or leave", "target": "it", "source": "magpie"}
{"prompt": "make a mountain out of a", "target": "molehill", "source": "epie"}
{"prompt": "crying over spilt", "target": "milk", "source": "ef"}
{"prompt": "the early bird catches the", "target": "worm", "source": "magpie"}
{"prompt": "a penny for your", "target": "thoughts", "source": "epie"}
{"prompt": "let sleeping dogs", "target": "lie", "source": "lidioms"}
{"prompt": "break a", "target": "leg", "source": "ef"}
)";

Outcome determinism() {
    const auto& w = work();
    const auto in = w.dir / "det_inputs";
    fs::create_directories(in);
    testing::write_file(in / "idioms.jsonl", kIdioms);
    testing::write_file(in / "wiki.txt",
                        "= Heading =\nthe quick brown fox jumps over the lazy dog and then it ran away\n"
                        "there is a free lunch for the boys in the board room today\n");
    testing::write_file(in / "facts.jsonl",
                        R"({"statement": "the quick brown ___", "answer": "fox", "relation": "P0"}
{"statement": "go back to the ___.", "answer": "drawing", "relation": "P1"}
)");
    const auto model = testing::fixture("mini").string();
    const std::string idioms = (in / "idioms.jsonl").string(), wiki = (in / "wiki.txt").string();

    auto run_all = [&](const fs::path& root) {
        const auto o = [&](const char* n) { return (root / n).string(); };
        cli({"probe", "--model", model, "--dataset", idioms, "--wiki-corpus", wiki, "--seed", "3", "--out", o("probe")});
        cli({"facts", "--model", model, "--dataset", (in / "facts.jsonl").string(), "--idioms", idioms, "--out",
             o("facts")});
        cli({"intervene", "--model", model, "--dataset", idioms, "--mode", "both", "--max-span", "2", "--k", "3",
             "--n-examples", "4", "--seed", "5", "--out", o("intervene")});
        cli({"filter", "--model", model, "--dataset", idioms, "--out", o("filter")});
        cli({"classify", "--probe-dir", o("probe"), "--folds", "4", "--out", o("classify")});
        cli({"freqcorr", "--model", model, "--wiki-corpus", wiki, "--probe-dir", o("probe"), "--out", o("freqcorr")});
    };
    // Both runs write to the same paths so that their manifests are identical; the first is moved aside.
    const auto a = w.dir / "det_first", b = w.dir / "det";
    run_all(b);
    fs::rename(b, a);
    // Rerun single-threaded: thread count is not part of the manifest, so outputs may not depend on it.
    const char* prev = std::getenv("OMP_NUM_THREADS");
    const std::string saved = prev ? prev : "";
    setenv("OMP_NUM_THREADS", "1", 1);
    run_all(b);
    prev ? setenv("OMP_NUM_THREADS", saved.c_str(), 1) : unsetenv("OMP_NUM_THREADS");

    std::size_t compared = 0;
    std::string problems;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (e.path().extension() != ".csv" && e.path().filename() != "manifest.json") continue;
        const auto rel = fs::relative(e.path(), a);
        const auto other = b / rel;
        if (e.path().extension() == ".csv") {
            ++compared;
            if (!fs::exists(other) || testing::read_file(e.path()) != testing::read_file(other))
                problems += " " + rel.string() + " differs;";
        } else if (testing::load_json(e.path())["manifest_id"] != testing::load_json(other)["manifest_id"]) {
            problems += " " + rel.string() + " id differs;";
        }
    }
    const std::string d = std::to_string(compared) + " CSV files over 6 commands compared across reruns";
    return problems.empty() && compared > 0 ? pass(d) : fail(d + ";" + problems);
}

struct Criterion {
    const char* name;
    std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> c{
        {"engine fidelity", engine_fidelity},       {"decomposition oracle", decomposition_oracle},
        {"two-phase profile", two_phase_profile},   {"memorized split size", memorized_split},
        {"intervention profile", intervention_profile}, {"classifier", classifier},
        {"correlation", correlation},               {"filter pipeline", filter_pipeline},
        {"facts profile", facts_profile},           {"determinism", determinism},
    };
    return c;
}

Outcome evaluate(std::size_t i) {
    try {
        return criteria()[i].run();
    } catch (const Blocked& b) {
        return blocked(b.what);
    } catch (const std::exception& e) {
        return fail(std::string("error: ") + e.what());
    }
}

void print(std::size_t i, const Outcome& o) {
    static const char* names[] = {"PASS", "FAIL", "BLOCKED"};
    std::cout << "criterion " << i + 1 << " (" << criteria()[i].name << "): " << names[static_cast<int>(o.status)]
              << " - " << o.detail << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (args.size() == 2 && args[0] == "--criterion") {
        const auto n = std::stoul(args[1]);
        if (n < 1 || n > criteria().size()) {
            std::cerr << "criterion must be 1.." << criteria().size() << "\n";
            return 2;
        }
        const auto o = evaluate(n - 1);
        print(n - 1, o);
        return o.status == Status::Pass ? 0 : o.status == Status::Fail ? 1 : 77;
    }
    if (!args.empty()) {
        std::cerr << "usage: acceptance [--criterion N]\n";
        return 2;
    }
    bool failed = false;
    for (std::size_t i = 0; i < criteria().size(); ++i) {
        const auto o = evaluate(i);
        print(i, o);
        failed |= o.status == Status::Fail;
    }
    return failed ? 1 : 0;
}
