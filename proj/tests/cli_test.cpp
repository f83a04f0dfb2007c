#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "conceptdrive/cli.hpp"
#include "conceptdrive/data.hpp"
#include "support.hpp"

using namespace conceptdrive;
using testsupport::TempDir;
namespace fs = std::filesystem;

namespace {

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("conceptdrive");
    for (const std::string& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

/// Generate a small dataset and return its manifest path.
std::string small_dataset(const TempDir& dir, const std::string& name,
                          const std::string& seed = "3") {
    const std::string out = dir.file(name);
    REQUIRE(run({"gen-data", "--out", out, "--sequences", "20", "--frames", "10",
                 "--concepts", "8", "--width", "16", "--seed", seed}) == 0);
    return out + "/manifest.json";
}

const std::vector<std::string> kTrainFlags = {"--epochs", "2",  "--dim",    "16",
                                              "--heads",  "2",  "--ffn",    "24",
                                              "--window",  "4", "--batch",  "4"};

std::vector<std::string> train_args(const std::string& manifest, const std::string& out) {
    std::vector<std::string> args = {"train", "--manifest", manifest, "--out", out,
                                     "--seed", "5"};
    args.insert(args.end(), kTrainFlags.begin(), kTrainFlags.end());
    return args;
}

}  // namespace

TEST_CASE("usage errors exit with 2, help with 0") {
    CHECK(run({}) == 2);
    CHECK(run({"definitely-not-a-subcommand"}) == 2);
    CHECK(run({"train", "--no-such-flag"}) == 2);
    CHECK(run({"--help"}) == 0);
    CHECK(run({"train", "--help"}) == 0);

    TempDir dir("cli-usage");
    // train and ablate insist on an explicit seed
    CHECK(run({"train", "--manifest", dir.file("m.json"), "--out", dir.file("o")}) == 2);
    CHECK(run({"ablate", "--manifest", dir.file("m.json"), "--out", dir.file("o"),
               "--sizes", "4"}) == 2);
}

TEST_CASE("missing and damaged inputs exit with 3") {
    TempDir dir("cli-bad-input");
    CHECK(run(train_args(dir.file("nope/manifest.json"), dir.file("run"))) == 3);

    const std::string manifest = small_dataset(dir, "data");
    SUBCASE("corrupt sequence payload") {
        // truncate one sequence file
        const fs::path seq = fs::path(dir.file("data")) / "seq_0000.cgsq";
        const std::string bytes = slurp(seq);
        std::ofstream out(seq, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
        out.close();
        CHECK(run(train_args(manifest, dir.file("run"))) == 3);
    }
    SUBCASE("manifest that is not json") {
        std::ofstream(dir.file("data") + "/manifest.json", std::ios::binary) << "{oops";
        CHECK(run(train_args(manifest, dir.file("run"))) == 3);
    }
}

TEST_CASE("gen-data writes a loadable, deterministic dataset") {
    TempDir dir("cli-gen");
    const std::string m1 = small_dataset(dir, "a", "41");
    const std::string m2 = small_dataset(dir, "b", "41");
    const std::string m3 = small_dataset(dir, "c", "42");

    const auto seqs = load_dataset(m1);
    REQUIRE(seqs.size() == 20);
    CHECK(seqs[0].frames() == 10);
    CHECK(seqs[0].embedding_width() == 16);

    // identical seeds produce byte-identical data files; run.json differs
    // only by the output path, so it stays out of the comparison
    for (const std::string name :
         {std::string("manifest.json"), std::string("truth.json"),
          std::string("concepts.txt"), std::string("concepts.cgem"),
          std::string("seq_0000.cgsq"), std::string("seq_0019.cgsq")}) {
        CHECK(slurp(fs::path(dir.file("a")) / name) == slurp(fs::path(dir.file("b")) / name));
    }
    CHECK(slurp(fs::path(dir.file("a")) / "seq_0000.cgsq") !=
          slurp(fs::path(dir.file("c")) / "seq_0000.cgsq"));

    // truth.json carries the generating rules
    const auto truth = nlohmann::json::parse(slurp(fs::path(dir.file("a")) / "truth.json"));
    CHECK(truth.at("n_concepts") == 8);
    CHECK(truth.at("informative_indices").size() == 8);  // min(10, k)
    CHECK(truth.at("scene_concept").size() == 20);
}

TEST_CASE("profile presets pin frames and rate unless overridden") {
    TempDir dir("cli-profile");
    REQUIRE(run({"gen-data", "--out", dir.file("nu"), "--profile", "nuscenes",
                 "--sequences", "2", "--concepts", "6", "--width", "12", "--seed", "1"}) == 0);
    const auto nu = load_dataset(dir.file("nu") + "/manifest.json");
    REQUIRE(nu.size() == 2);
    CHECK(nu[0].frames() == 20);
    CHECK(nu[0].fps == 1.0f);
    CHECK(nu[0].profile == SequenceProfile::nuscenes);

    REQUIRE(run({"gen-data", "--out", dir.file("co"), "--profile", "comma",
                 "--sequences", "1", "--concepts", "6", "--width", "12", "--seed", "1"}) == 0);
    const auto co = load_dataset(dir.file("co") + "/manifest.json");
    CHECK(co[0].frames() == 240);
    CHECK(co[0].fps == 4.0f);
}

TEST_CASE("the full pipeline leaves every artifact in place") {
    TempDir dir("cli-pipe");
    const std::string manifest = small_dataset(dir, "data");
    const std::string run_dir = dir.file("run");
    REQUIRE(run(train_args(manifest, run_dir)) == 0);
    CHECK(fs::exists(fs::path(run_dir) / "checkpoint.cgck"));
    CHECK(fs::exists(fs::path(run_dir) / "losses.csv"));
    CHECK(fs::exists(fs::path(run_dir) / "test_eval.json"));
    const auto run_doc = nlohmann::json::parse(slurp(fs::path(run_dir) / "run.json"));
    CHECK(run_doc.at("subcommand") == "train");
    CHECK(run_doc.at("seed") == 5);
    CHECK(run_doc.at("model_config").at("model_dim") == 16);
    CHECK(run_doc.count("timestamp") == 0);

    const std::string ckpt = (fs::path(run_dir) / "checkpoint.cgck").string();
    REQUIRE(run({"eval", "--manifest", manifest, "--checkpoint", ckpt, "--out",
                 dir.file("eval"), "--split", "test", "--seed", "5"}) == 0);
    const auto eval_doc = nlohmann::json::parse(slurp(fs::path(dir.file("eval")) / "eval.json"));
    CHECK(eval_doc.at("split") == "test");
    CHECK(eval_doc.at("n_angle") == 2);  // floor(20 * 0.10)
    CHECK(eval_doc.at("distance_bins").is_array());

    REQUIRE(run({"explain", "--manifest", manifest, "--checkpoint", ckpt, "--out",
                 dir.file("explain")}) == 0);
    CHECK(fs::exists(fs::path(dir.file("explain")) / "rates.json"));
    std::size_t reports = 0;
    for (const auto& entry : fs::directory_iterator(dir.file("explain")))
        if (entry.path().filename().string().rfind("explain_seq_", 0) == 0) ++reports;
    CHECK(reports == 2 * 20);  // json + csv per sequence
    const auto rates = nlohmann::json::parse(slurp(fs::path(dir.file("explain")) / "rates.json"));
    CHECK(rates.at("top1").at("n_scenes") == 20);
    CHECK(rates.at("top3").at("scene_rate").is_number());

    REQUIRE(run({"ablate", "--manifest", manifest, "--out", dir.file("ablate"), "--seed",
                 "5", "--sizes", "4,full", "--epochs", "1", "--dim", "16", "--heads", "2",
                 "--ffn", "24", "--window", "4"}) == 0);
    const std::string csv = slurp(fs::path(dir.file("ablate")) / "ablation.csv");
    CHECK(csv.rfind("size,seed,a_mae,d_mae\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + two rows
    CHECK(csv.find("\nfull,") != std::string::npos);

    REQUIRE(run({"bench", "--checkpoint", ckpt, "--out", dir.file("bench"), "--frames",
                 "8", "--runs", "3"}) == 0);
    const auto bench = nlohmann::json::parse(slurp(fs::path(dir.file("bench")) / "bench.json"));
    CHECK(bench.at("frames") == 8);
    CHECK(bench.at("runs") == 3);
    CHECK(bench.at("median_ms").get<double>() > 0.0);
    // run.json stays free of timing so replays compare clean
    const std::string bench_run = slurp(fs::path(dir.file("bench")) / "run.json");
    CHECK(bench_run.find("median_ms") == std::string::npos);
}

TEST_CASE("replay reproduces a training run byte for byte") {
    TempDir dir("cli-replay");
    const std::string manifest = small_dataset(dir, "data");
    const std::string first = dir.file("first");
    REQUIRE(run(train_args(manifest, first)) == 0);

    const std::string second = dir.file("second");
    REQUIRE(run({"replay", "--run", first + "/run.json", "--out", second}) == 0);
    CHECK(slurp(fs::path(first) / "checkpoint.cgck") ==
          slurp(fs::path(second) / "checkpoint.cgck"));
    CHECK(slurp(fs::path(first) / "losses.csv") == slurp(fs::path(second) / "losses.csv"));

    CHECK(run({"replay", "--run", dir.file("missing.json"), "--out", dir.file("x")}) == 3);
}

TEST_CASE("curate merges, dedups, and reports") {
    TempDir dir("cli-curate");
    {
        std::ofstream human(dir.file("human.txt"));
        human << "a junction\nA   Junction\npedestrians crossing\n";
        std::ofstream generated(dir.file("generated.txt"));
        generated << "a photo of a junction\nhighway at night\n";
    }
    REQUIRE(run({"curate", "--human", dir.file("human.txt"), "--generated",
                 dir.file("generated.txt"), "--out", dir.file("out")}) == 0);

    const auto texts = read_concept_texts(dir.file("out") + "/concepts.txt");
    REQUIRE(texts.size() == 3);
    CHECK(texts[0] == "a photo of a junction");
    CHECK(texts[1] == "a photo of pedestrians crossing");
    CHECK(texts[2] == "a photo of highway at night");

    const auto report = nlohmann::json::parse(slurp(fs::path(dir.file("out")) / "report.json"));
    CHECK(report.at("n_human_in") == 3);
    CHECK(report.at("n_generated_in") == 2);
    CHECK(report.at("n_out") == 3);
    CHECK(report.at("n_duplicates_removed") == 2);

    // an empty merged list is a validation failure
    std::ofstream(dir.file("empty.txt")).close();
    CHECK(run({"curate", "--human", dir.file("empty.txt"), "--out", dir.file("out2")}) == 3);
    // and at least one input list is required
    CHECK(run({"curate", "--out", dir.file("out3")}) == 1);
}

TEST_CASE("numeric blowups surface as exit 4") {
    TempDir dir("cli-blowup");
    const std::string manifest = small_dataset(dir, "data");
    std::vector<std::string> args = train_args(manifest, dir.file("run"));
    args.push_back("--lr");
    args.push_back("1e300");
    CHECK(run(args) == 4);
}
