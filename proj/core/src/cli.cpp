#include "conceptdrive/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "CLI11.hpp"
#include "conceptdrive/compare.hpp"
#include "conceptdrive/errors.hpp"
#include "conceptdrive/explain.hpp"
#include "conceptdrive/model.hpp"
#include "conceptdrive/stopwords.hpp"
#include "conceptdrive/training.hpp"
#include "fmt_util.hpp"
#include "json.hpp"

namespace conceptdrive {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing", 0);
    out << content;
    out.close();
    if (!out) throw FormatError("failed while writing " + path.string(), 0);
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string(), 0);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// ---- shared flag bundles ----

struct ModelFlags {
    std::size_t dim = 64, layers = 2, heads = 4, window = 8, ffn = 128, max_seq_len = 0;
    double dropout = 0.1;
    std::string task = "both";
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
    cmd->add_option("--dim", f.dim, "model width")->capture_default_str();
    cmd->add_option("--layers", f.layers, "encoder layers")->capture_default_str();
    cmd->add_option("--heads", f.heads, "attention heads")->capture_default_str();
    cmd->add_option("--window", f.window, "attention window in frames")->capture_default_str();
    cmd->add_option("--ffn", f.ffn, "feed-forward width")->capture_default_str();
    cmd->add_option("--dropout", f.dropout, "dropout rate")->capture_default_str();
    cmd->add_option("--task", f.task, "angle|distance|both")->capture_default_str();
    cmd->add_option("--max-seq-len", f.max_seq_len,
                    "positional table size (0 = longest sequence)");
}

ModelConfig resolve_model(const ModelFlags& f, std::size_t n_concepts, std::size_t longest) {
    ModelConfig c;
    c.input_dim = n_concepts + 3;
    c.model_dim = f.dim;
    c.n_layers = f.layers;
    c.n_heads = f.heads;
    c.window = f.window;
    c.ffn_dim = f.ffn;
    c.dropout_rate = f.dropout;
    c.tasks = task_from_string(f.task);
    c.max_seq_len = f.max_seq_len ? f.max_seq_len : longest;
    validate_config(c);
    return c;
}

struct TrainFlags {
    std::size_t epochs = 30, batch = 8;
    double lr = 1e-3, w_angle = 1.0, w_distance = 1.0, cap = 70.0;
    double clip = 0.0;  // 0 = no clipping
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--epochs", f.epochs, "training epochs")->capture_default_str();
    cmd->add_option("--batch", f.batch, "sequences per step")->capture_default_str();
    cmd->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--clip", f.clip, "global gradient-norm cap (0 = off)");
    cmd->add_option("--weight-angle", f.w_angle, "angle loss weight")->capture_default_str();
    cmd->add_option("--weight-distance", f.w_distance, "distance loss weight")
        ->capture_default_str();
    cmd->add_option("--distance-cap", f.cap, "meters beyond which the distance task skips")
        ->capture_default_str();
}

TrainConfig resolve_train(const TrainFlags& f, std::uint64_t seed) {
    TrainConfig t;
    t.epochs = f.epochs;
    t.batch_size = f.batch;
    t.learning_rate = f.lr;
    t.seed = seed;
    if (f.clip > 0.0) t.grad_clip = f.clip;
    t.weight_angle = f.w_angle;
    t.weight_distance = f.w_distance;
    t.distance_cap = f.cap;
    validate_train_config(t);
    return t;
}

json train_config_json(const TrainConfig& t) {
    json j;
    j["epochs"] = t.epochs;
    j["batch_size"] = t.batch_size;
    j["learning_rate"] = t.learning_rate;
    j["beta1"] = t.beta1;
    j["beta2"] = t.beta2;
    j["adam_eps"] = t.adam_eps;
    j["seed"] = t.seed;
    j["grad_clip"] = t.grad_clip ? json(*t.grad_clip) : json(nullptr);
    j["weight_angle"] = t.weight_angle;
    j["weight_distance"] = t.weight_distance;
    j["distance_cap"] = t.distance_cap;
    return j;
}

void write_run_json(const fs::path& out_dir, const std::vector<std::string>& argv,
                    const std::string& subcommand, json extra) {
    extra["argv"] = argv;
    extra["subcommand"] = subcommand;
    write_text_file(out_dir / "run.json", extra.dump(2) + "\n");
}

struct LoadedData {
    ConceptSet set;
    std::vector<DriveSequence> seqs;
    std::size_t longest = 0;
};

LoadedData load_all(const std::string& manifest_path) {
    LoadedData d;
    const DatasetManifest m = read_manifest(manifest_path);
    d.seqs = load_dataset(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    d.set = load_concept_set((base / m.concepts_texts).string(),
                             (base / m.concepts_embeddings).string(), SourceTag::mixed);
    if (d.set.width() != m.embedding_width)
        throw ValidationError("concept embedding width " + std::to_string(d.set.width()) +
                              " does not match manifest embedding_width " +
                              std::to_string(m.embedding_width));
    for (const DriveSequence& s : d.seqs) d.longest = std::max(d.longest, s.frames());
    return d;
}

std::vector<std::size_t> split_indices(const DatasetSplit& split, const std::string& name,
                                       std::size_t n) {
    if (name == "train") return split.train;
    if (name == "val") return split.val;
    if (name == "test") return split.test;
    if (name == "all") {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        return all;
    }
    throw ParamError("unknown split '" + name + "' (train|val|test|all)");
}

json eval_report_json(const EvalReport& ev) {
    json j;
    j["angle_mae"] = ev.angle_mae ? json(*ev.angle_mae) : json(nullptr);
    j["distance_mae"] = ev.distance_mae ? json(*ev.distance_mae) : json(nullptr);
    j["n_angle"] = ev.n_angle;
    j["n_distance"] = ev.n_distance;
    j["over_cap"] = ev.over_cap;
    json dbins = json::array();
    for (const BinStat& b : ev.distance_bins)
        dbins.push_back({{"label", b.label}, {"count", b.count}, {"mae", b.mae}});
    j["distance_bins"] = dbins;
    json abins = json::array();
    for (const BinStat& b : ev.angle_bins)
        abins.push_back({{"label", b.label}, {"count", b.count}, {"mae", b.mae}});
    j["angle_bins"] = abins;
    return j;
}

// templated, deduplicated view of a raw concept list; keep maps each output
// text to its input row
struct CuratedTexts {
    std::vector<std::string> texts;
    std::vector<std::size_t> keep;
};

CuratedTexts template_dedup(const std::vector<std::string>& raw) {
    CuratedTexts out;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const std::string templated = apply_template(raw[i]);
        if (seen.insert(canonicalize(templated)).second) {
            out.texts.push_back(templated);
            out.keep.push_back(i);
        }
    }
    return out;
}

ConceptSet curated_set(const std::vector<std::string>& raw_texts, const Tensor& emb,
                       SourceTag tag) {
    if (raw_texts.size() != emb.rows())
        throw ValidationError("text count " + std::to_string(raw_texts.size()) +
                              " does not match embedding rows " +
                              std::to_string(emb.rows()));
    const CuratedTexts cur = template_dedup(raw_texts);
    Tensor rows(cur.texts.size(), emb.cols(), 0.0);
    for (std::size_t i = 0; i < cur.keep.size(); ++i)
        for (std::size_t c = 0; c < emb.cols(); ++c)
            rows.at(i, c) = emb.at(cur.keep[i], c);
    return ConceptSet(cur.texts, rows, tag, /*normalize=*/true);
}

// ---- subcommand argument bundles ----

struct GenDataArgs {
    std::string out;
    std::size_t sequences = 64, frames = 20, width = 32, concepts = 24;
    std::uint64_t seed = 0;
    double noise = 0.05;
    float fps = 4.0f;
    std::string profile = "custom";
    bool frames_given = false, fps_given = false;
};

int cmd_gen_data(const GenDataArgs& a, const std::vector<std::string>& argv) {
    SyntheticSpec spec;
    spec.n_sequences = a.sequences;
    spec.frames = a.frames;
    spec.embedding_width = a.width;
    spec.n_concepts = a.concepts;
    spec.seed = a.seed;
    spec.noise_std = a.noise;
    spec.fps = a.fps;
    spec.profile = profile_from_string(a.profile);
    // a declared profile pins (frames, fps) unless explicitly overridden
    if (spec.profile == SequenceProfile::comma) {
        if (!a.frames_given) spec.frames = 240;
        if (!a.fps_given) spec.fps = 4.0f;
    } else if (spec.profile == SequenceProfile::nuscenes) {
        if (!a.frames_given) spec.frames = 20;
        if (!a.fps_given) spec.fps = 1.0f;
    }

    const SyntheticDataset ds = generate_synthetic(spec);
    const fs::path out(a.out);
    fs::create_directories(out);

    write_concept_texts(ds.concepts.texts(), (out / "concepts.txt").string());
    write_cgem(ds.concepts.embeddings(), (out / "concepts.cgem").string());

    DatasetManifest m;
    m.name = "synthetic";
    m.embedding_width = spec.embedding_width;
    m.concepts_texts = "concepts.txt";
    m.concepts_embeddings = "concepts.cgem";
    for (const DriveSequence& s : ds.sequences) {
        const std::string file = s.id + ".cgsq";
        write_sequence(s, (out / file).string());
        m.sequences.push_back({file, s.profile});
    }
    write_manifest(m, (out / "manifest.json").string());

    json truth;
    truth["n_concepts"] = ds.truth.n_concepts;
    truth["informative_indices"] = ds.truth.informative_indices;
    truth["distance_coeffs"] = ds.truth.distance_coeffs;
    truth["distance_base"] = ds.truth.distance_base;
    truth["angle_coeffs"] = ds.truth.angle_coeffs;
    truth["noise_std"] = ds.truth.noise_std;
    truth["bayes_mae"] = ds.truth.bayes_mae;
    truth["scene_concept"] = ds.truth.scene_concept;
    truth["final_weights"] = ds.truth.final_weights;
    write_text_file(out / "truth.json", truth.dump(2) + "\n");

    json extra;
    extra["seed"] = a.seed;
    json s;
    s["n_sequences"] = spec.n_sequences;
    s["frames"] = spec.frames;
    s["embedding_width"] = spec.embedding_width;
    s["n_concepts"] = spec.n_concepts;
    s["noise_std"] = spec.noise_std;
    s["fps"] = spec.fps;
    s["profile"] = to_string(spec.profile);
    extra["synthetic"] = s;
    write_run_json(out, argv, "gen-data", extra);

    std::cout << "wrote " << ds.sequences.size() << " sequences, " << ds.concepts.size()
              << " concepts to " << out.string() << "\n";
    return 0;
}

struct CurateArgs {
    std::string human, generated, human_emb, generated_emb, manifest, out;
    bool compare = false;
    std::uint64_t seed = 0;
    ModelFlags model;
    TrainFlags train;
};

int cmd_curate(const CurateArgs& a, const std::vector<std::string>& argv) {
    if (a.human.empty() && a.generated.empty())
        throw ParamError("curate needs --human and/or --generated");
    const fs::path out(a.out);
    fs::create_directories(out);

    std::vector<std::string> human_raw, generated_raw;
    if (!a.human.empty()) human_raw = read_concept_texts(a.human);
    if (!a.generated.empty()) generated_raw = read_concept_texts(a.generated);

    std::vector<std::string> merged_raw = human_raw;
    merged_raw.insert(merged_raw.end(), generated_raw.begin(), generated_raw.end());
    if (merged_raw.empty()) throw ValidationError("curated concept list is empty");
    const CuratedTexts merged = template_dedup(merged_raw);
    write_concept_texts(merged.texts, (out / "concepts.txt").string());

    json report;
    report["n_human_in"] = human_raw.size();
    report["n_generated_in"] = generated_raw.size();
    report["n_out"] = merged.texts.size();
    report["n_duplicates_removed"] = merged_raw.size() - merged.texts.size();
    write_text_file(out / "report.json", report.dump(2) + "\n");

    if (a.compare) {
        if (a.human.empty() || a.generated.empty() || a.human_emb.empty() ||
            a.generated_emb.empty() || a.manifest.empty())
            throw ParamError(
                "--compare needs --human, --generated, their --*-emb files, and --manifest");
        const ConceptSet set_a =
            curated_set(human_raw, read_cgem(a.human_emb), SourceTag::human);
        const ConceptSet set_b =
            curated_set(generated_raw, read_cgem(a.generated_emb), SourceTag::generated);
        const LoadedData data = load_all(a.manifest);
        const ModelConfig mc = resolve_model(a.model, set_a.size(), data.longest);
        const TrainConfig tc = resolve_train(a.train, a.seed);
        const auto rows = compare_concept_sets(set_a, set_b, data.seqs, mc, tc);
        write_text_file(out / "compare.csv", compare_csv(rows));
    }

    json extra;
    extra["seed"] = a.seed;
    extra["compare"] = a.compare;
    write_run_json(out, argv, "curate", extra);
    std::cout << "curated " << merged.texts.size() << " concepts to " << out.string() << "\n";
    return 0;
}

struct TrainArgs {
    std::string manifest, out;
    std::uint64_t seed = 0;
    ModelFlags model;
    TrainFlags train;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv) {
    const LoadedData data = load_all(a.manifest);
    const ModelConfig mc = resolve_model(a.model, data.set.size(), data.longest);
    const TrainConfig tc = resolve_train(a.train, a.seed);
    const DatasetSplit split = split_dataset(data.seqs.size(), SplitRatios{}, a.seed);

    const FitResult fitted = fit(gather(data.seqs, split.train), gather(data.seqs, split.val),
                                 data.set, mc, tc);

    const fs::path out(a.out);
    fs::create_directories(out);
    save_checkpoint(fitted.params, mc, (out / "checkpoint.cgck").string());
    write_text_file(out / "losses.csv", loss_csv(fitted.log, mc.tasks));
    if (!split.test.empty()) {
        const EvalReport ev = evaluate(gather(data.seqs, split.test), data.set,
                                       fitted.params, mc, tc.distance_cap);
        write_text_file(out / "test_eval.json", eval_report_json(ev).dump(2) + "\n");
    }

    json extra;
    extra["manifest"] = a.manifest;
    extra["seed"] = a.seed;
    extra["model_config"] = json::parse(config_to_json(mc));
    extra["train_config"] = train_config_json(tc);
    write_run_json(out, argv, "train", extra);

    std::cout << "trained on " << split.train.size() << " sequences, best epoch "
              << fitted.best_epoch << ", checkpoint " << (out / "checkpoint.cgck").string()
              << "\n";
    return 0;
}

struct EvalArgs {
    std::string manifest, checkpoint, out, split = "test";
    std::uint64_t seed = 0;
    double cap = 70.0;
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
    const LoadedData data = load_all(a.manifest);
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    if (ck.config.input_dim != data.set.size() + 3)
        throw ValidationError("checkpoint expects input_dim " +
                              std::to_string(ck.config.input_dim) + " but the manifest's " +
                              std::to_string(data.set.size()) + " concepts give " +
                              std::to_string(data.set.size() + 3));

    const DatasetSplit split = split_dataset(data.seqs.size(), SplitRatios{}, a.seed);
    const auto indices = split_indices(split, a.split, data.seqs.size());
    const EvalReport ev =
        evaluate(gather(data.seqs, indices), data.set, ck.params, ck.config, a.cap);

    const fs::path out(a.out);
    fs::create_directories(out);
    json j = eval_report_json(ev);
    j["split"] = a.split;
    j["seed"] = a.seed;
    j["distance_cap"] = a.cap;
    write_text_file(out / "eval.json", j.dump(2) + "\n");

    json extra;
    extra["manifest"] = a.manifest;
    extra["checkpoint"] = a.checkpoint;
    extra["seed"] = a.seed;
    extra["split"] = a.split;
    extra["distance_cap"] = a.cap;
    write_run_json(out, argv, "eval", extra);

    std::cout << "evaluated " << indices.size() << " sequences (" << a.split << ")";
    if (ev.angle_mae) std::cout << ", angle MAE " << *ev.angle_mae;
    if (ev.distance_mae) std::cout << ", distance MAE " << *ev.distance_mae;
    std::cout << "\n";
    return 0;
}

struct ExplainArgs {
    std::string manifest, checkpoint, out;
    std::size_t window = 20, k_per_frame = 10, min_gap = 4;
    double z = 2.5;
};

int cmd_explain(const ExplainArgs& a, const std::vector<std::string>& argv) {
    const LoadedData data = load_all(a.manifest);
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    if (ck.config.input_dim != data.set.size() + 3)
        throw ValidationError("checkpoint input_dim does not match the manifest's concepts");

    const fs::path out(a.out);
    fs::create_directories(out);
    for (const DriveSequence& seq : data.seqs) {
        const ExplanationReport report = explain_sequence(
            seq, data.set, ck.params, ck.config, a.window, a.k_per_frame, a.z, a.min_gap);
        write_text_file(out / ("explain_" + seq.id + ".json"),
                        explanation_json(report, data.set));
        write_text_file(out / ("explain_" + seq.id + ".csv"),
                        explanation_csv(report, data.set));
    }

    json rates;
    for (const ExplainMode mode : {ExplainMode::top1, ExplainMode::top3}) {
        const ExplainRates r = scene_explain_rate(data.seqs, data.set, mode);
        json jr;
        jr["scene_rate"] = r.scene_rate;
        jr["frame_rate"] = r.frame_rate;
        jr["n_scenes"] = r.n_scenes;
        jr["n_frames"] = r.n_frames;
        jr["n_skipped"] = r.n_skipped;
        rates[to_string(mode)] = jr;
    }
    write_text_file(out / "rates.json", rates.dump(2) + "\n");

    json extra;
    extra["manifest"] = a.manifest;
    extra["checkpoint"] = a.checkpoint;
    extra["window_frames"] = a.window;
    extra["k_per_frame"] = a.k_per_frame;
    extra["z_threshold"] = a.z;
    extra["min_gap"] = a.min_gap;
    write_run_json(out, argv, "explain", extra);

    std::cout << "explained " << data.seqs.size() << " sequences to " << out.string() << "\n";
    return 0;
}

struct AblateArgs {
    std::string manifest, out;
    std::uint64_t seed = 0;
    std::vector<std::string> sizes;
    std::vector<std::uint64_t> seeds;
    ModelFlags model;
    TrainFlags train;
};

int cmd_ablate(const AblateArgs& a, const std::vector<std::string>& argv) {
    const LoadedData data = load_all(a.manifest);

    std::vector<std::size_t> sizes;
    for (const std::string& s : a.sizes) {
        if (s == "full") {
            sizes.push_back(data.set.size());
        } else {
            std::size_t pos = 0;
            unsigned long long v = 0;
            try {
                v = std::stoull(s, &pos);
            } catch (const std::exception&) {
                throw ParamError("bad ablation size '" + s + "'");
            }
            if (pos != s.size()) throw ParamError("bad ablation size '" + s + "'");
            sizes.push_back(static_cast<std::size_t>(v));
        }
    }
    const std::vector<std::uint64_t> seeds = a.seeds.empty()
                                                 ? std::vector<std::uint64_t>{a.seed}
                                                 : a.seeds;

    const ModelConfig mc = resolve_model(a.model, data.set.size(), data.longest);
    const TrainConfig tc = resolve_train(a.train, a.seed);
    const auto rows = ablate_bottleneck(data.set, sizes, seeds, data.seqs, mc, tc);

    const fs::path out(a.out);
    fs::create_directories(out);
    write_text_file(out / "ablation.csv", ablation_csv(rows));

    json extra;
    extra["manifest"] = a.manifest;
    extra["seed"] = a.seed;
    extra["sizes"] = a.sizes;
    extra["seeds"] = seeds;
    extra["model_config"] = json::parse(config_to_json(mc));
    extra["train_config"] = train_config_json(tc);
    write_run_json(out, argv, "ablate", extra);

    std::cout << "ablation over " << sizes.size() << " sizes x " << seeds.size()
              << " seeds -> " << (out / "ablation.csv").string() << "\n";
    return 0;
}

struct BenchArgs {
    std::string out, checkpoint;
    std::size_t frames = 240, runs = 100, concepts = 24;
    std::uint64_t seed = 0;
    ModelFlags model;
};

int cmd_bench(const BenchArgs& a, const std::vector<std::string>& argv) {
    ModelParams params;
    ModelConfig config;
    if (!a.checkpoint.empty()) {
        Checkpoint ck = load_checkpoint(a.checkpoint);
        params = std::move(ck.params);
        config = ck.config;
        if (a.frames > config.max_seq_len)
            throw ParamError("checkpoint supports at most " +
                             std::to_string(config.max_seq_len) + " frames");
    } else {
        ModelFlags f = a.model;
        if (f.max_seq_len == 0) f.max_seq_len = a.frames;
        config = resolve_model(f, a.concepts, a.frames);
        params = init_params(config, a.seed);
    }

    const BenchReport report = bench_inference(params, config, a.frames, a.runs);

    const fs::path out(a.out);
    fs::create_directories(out);
    json timing;
    timing["frames"] = report.frames;
    timing["runs"] = report.runs;
    timing["median_ms"] = report.median_ms;
    timing["mean_ms"] = report.mean_ms;
    write_text_file(out / "bench.json", timing.dump(2) + "\n");

    // run.json stays timing-free so determinism checks can byte-compare it
    json extra;
    extra["frames"] = a.frames;
    extra["runs"] = a.runs;
    extra["seed"] = a.seed;
    extra["model_config"] = json::parse(config_to_json(config));
    write_run_json(out, argv, "bench", extra);

    std::cout << "bench frames=" << report.frames << " runs=" << report.runs
              << " median_ms=" << report.median_ms << " mean_ms=" << report.mean_ms << "\n";
    return 0;
}

struct ReplayArgs {
    std::string run;
    std::string out_override;
};

int cmd_replay(const ReplayArgs& a) {
    json j;
    try {
        j = json::parse(read_text_file(a.run));
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("run file does not parse: ") + e.what(), e.byte);
    }
    if (!j.contains("argv") || !j["argv"].is_array())
        throw FormatError("run file has no argv array", 0);

    std::vector<std::string> argv_strings;
    for (const auto& v : j["argv"]) argv_strings.push_back(v.get<std::string>());
    if (argv_strings.size() < 2) throw FormatError("run file argv is too short", 0);

    if (!a.out_override.empty()) {
        bool replaced = false;
        for (std::size_t i = 0; i + 1 < argv_strings.size(); ++i) {
            if (argv_strings[i] == "--out") {
                argv_strings[i + 1] = a.out_override;
                replaced = true;
            }
        }
        if (!replaced) throw ParamError("replayed run has no --out to override");
    }

    std::vector<const char*> argv;
    argv.reserve(argv_strings.size());
    for (const std::string& s : argv_strings) argv.push_back(s.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"concept-bottleneck driving pipeline"};
    app.require_subcommand(1);

    GenDataArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen_cmd->add_option("--out", gen.out, "output directory")->required();
    gen_cmd->add_option("--sequences", gen.sequences, "number of sequences")
        ->capture_default_str();
    CLI::Option* frames_opt =
        gen_cmd->add_option("--frames", gen.frames, "frames per sequence")
            ->capture_default_str();
    gen_cmd->add_option("--width", gen.width, "embedding width")->capture_default_str();
    gen_cmd->add_option("--concepts", gen.concepts, "concept count")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
    gen_cmd->add_option("--noise", gen.noise, "sensor/embedding noise std")
        ->capture_default_str();
    CLI::Option* fps_opt =
        gen_cmd->add_option("--fps", gen.fps, "frames per second")->capture_default_str();
    gen_cmd->add_option("--profile", gen.profile, "custom|comma|nuscenes")
        ->capture_default_str();

    CurateArgs curate;
    CLI::App* curate_cmd = app.add_subcommand("curate", "merge and template concept lists");
    curate_cmd->add_option("--human", curate.human, "human concept list");
    curate_cmd->add_option("--generated", curate.generated, "generated concept list");
    curate_cmd->add_option("--human-emb", curate.human_emb, "embeddings for --human");
    curate_cmd->add_option("--generated-emb", curate.generated_emb,
                           "embeddings for --generated");
    curate_cmd->add_option("--manifest", curate.manifest, "dataset manifest for --compare");
    curate_cmd->add_option("--out", curate.out, "output directory")->required();
    curate_cmd->add_flag("--compare", curate.compare, "train one model per input set");
    curate_cmd->add_option("--seed", curate.seed, "training seed for --compare")
        ->capture_default_str();
    add_model_flags(curate_cmd, curate.model);
    add_train_flags(curate_cmd, curate.train);

    TrainArgs train;
    CLI::App* train_cmd = app.add_subcommand("train", "fit a model on a dataset");
    train_cmd->add_option("--manifest", train.manifest, "dataset manifest")->required();
    train_cmd->add_option("--out", train.out, "output directory")->required();
    train_cmd->add_option("--seed", train.seed, "split/init/shuffle seed")->required();
    add_model_flags(train_cmd, train.model);
    add_train_flags(train_cmd, train.train);

    EvalArgs eval;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--manifest", eval.manifest, "dataset manifest")->required();
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "model checkpoint")->required();
    eval_cmd->add_option("--out", eval.out, "output directory")->required();
    eval_cmd->add_option("--split", eval.split, "train|val|test|all")->capture_default_str();
    eval_cmd->add_option("--seed", eval.seed, "seed the split was made with")
        ->capture_default_str();
    eval_cmd->add_option("--distance-cap", eval.cap, "distance task cap in meters")
        ->capture_default_str();

    ExplainArgs explain;
    CLI::App* explain_cmd = app.add_subcommand("explain", "emit explanation reports");
    explain_cmd->add_option("--manifest", explain.manifest, "dataset manifest")->required();
    explain_cmd->add_option("--checkpoint", explain.checkpoint, "model checkpoint")
        ->required();
    explain_cmd->add_option("--out", explain.out, "output directory")->required();
    explain_cmd->add_option("--window", explain.window, "aggregation window in frames")
        ->capture_default_str();
    explain_cmd->add_option("--k-per-frame", explain.k_per_frame, "concepts per frame")
        ->capture_default_str();
    explain_cmd->add_option("--z", explain.z, "spike z-score threshold")
        ->capture_default_str();
    explain_cmd->add_option("--min-gap", explain.min_gap, "frames between distinct spikes")
        ->capture_default_str();

    AblateArgs ablate;
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "bottleneck-size ablation grid");
    ablate_cmd->add_option("--manifest", ablate.manifest, "dataset manifest")->required();
    ablate_cmd->add_option("--out", ablate.out, "output directory")->required();
    ablate_cmd->add_option("--seed", ablate.seed, "base seed")->required();
    ablate_cmd->add_option("--sizes", ablate.sizes, "subset sizes, e.g. 24,48,full")
        ->required()
        ->delimiter(',');
    ablate_cmd->add_option("--seeds", ablate.seeds, "per-cell seeds (default: --seed)")
        ->delimiter(',');
    add_model_flags(ablate_cmd, ablate.model);
    add_train_flags(ablate_cmd, ablate.train);

    BenchArgs bench;
    CLI::App* bench_cmd = app.add_subcommand("bench", "time inference");
    bench_cmd->add_option("--out", bench.out, "output directory")->required();
    bench_cmd->add_option("--frames", bench.frames, "sequence length")->capture_default_str();
    bench_cmd->add_option("--runs", bench.runs, "timed runs")->capture_default_str();
    bench_cmd->add_option("--checkpoint", bench.checkpoint, "model checkpoint (optional)");
    bench_cmd->add_option("--concepts", bench.concepts,
                          "concept count when no checkpoint is given")
        ->capture_default_str();
    bench_cmd->add_option("--seed", bench.seed, "init seed when no checkpoint is given")
        ->capture_default_str();
    add_model_flags(bench_cmd, bench.model);

    ReplayArgs replay;
    CLI::App* replay_cmd = app.add_subcommand("replay", "re-execute a run.json");
    replay_cmd->add_option("--run", replay.run, "run.json from a previous run")->required();
    replay_cmd->add_option("--out", replay.out_override,
                           "redirect the replayed run's --out");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const std::vector<std::string> argv_strings(argv, argv + argc);
    try {
        if (*gen_cmd) {
            gen.frames_given = frames_opt->count() > 0;
            gen.fps_given = fps_opt->count() > 0;
            return cmd_gen_data(gen, argv_strings);
        }
        if (*curate_cmd) return cmd_curate(curate, argv_strings);
        if (*train_cmd) return cmd_train(train, argv_strings);
        if (*eval_cmd) return cmd_eval(eval, argv_strings);
        if (*explain_cmd) return cmd_explain(explain, argv_strings);
        if (*ablate_cmd) return cmd_ablate(ablate, argv_strings);
        if (*bench_cmd) return cmd_bench(bench, argv_strings);
        if (*replay_cmd) return cmd_replay(replay);
        std::cerr << "no subcommand given\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace conceptdrive
