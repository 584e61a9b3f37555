#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qcea/baselines.hpp"
#include "qcea/bundle.hpp"
#include "test_util.hpp"

using namespace qcea;
namespace fs = std::filesystem;

#ifndef QCEA_CLI_BIN
#error "QCEA_CLI_BIN must point at the built CLI"
#endif

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(QCEA_CLI_BIN) + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
}

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("qcea_cli_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream out;
    out << f.rdbuf();
    return out.str();
}

bool dirs_equal(const fs::path& a, const fs::path& b) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(a)) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    for (const auto& n : names)
        if (slurp(a / n) != slurp(b / n)) return false;
    return true;
}

double metric_from_tsv(const fs::path& tsv, const std::string& mode, const std::string& stratum,
                       int column_from_n) {
    std::ifstream f(tsv);
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        std::istringstream row(line);
        std::string m, s;
        row >> m >> s;
        if (m != mode || s != stratum) continue;
        double v = 0.0;
        for (int i = 0; i <= column_from_n; ++i) row >> v;
        return v;
    }
    FAIL("row not found in " + tsv.string());
    return 0.0;
}

}  // namespace

TEST_CASE("gen is byte-identical across reruns and differs across seeds") {
    const fs::path a = temp_dir("gen_a");
    const fs::path b = temp_dir("gen_b");
    const fs::path c = temp_dir("gen_c");
    REQUIRE(run("gen --preset tiny --out " + a.string() + " --seed 7") == 0);
    REQUIRE(run("gen --preset tiny --out " + b.string() + " --seed 7") == 0);
    REQUIRE(run("gen --preset tiny --out " + c.string() + " --seed 8") == 0);
    REQUIRE(dirs_equal(a, b));
    REQUIRE_FALSE(dirs_equal(a, c));
    REQUIRE(fs::exists(a / "manifest.json"));
    const std::string manifest = slurp(a / "manifest.json");
    REQUIRE(manifest.find("\"command\": \"gen\"") != std::string::npos);
    REQUIRE(manifest.find("\"seed\": 7") != std::string::npos);
}

TEST_CASE("the full pipeline on the noiseless tiny preset reaches hit@10 of one") {
    const fs::path data = temp_dir("pipe_data");
    const fs::path runa = temp_dir("pipe_runa");
    const fs::path runb = temp_dir("pipe_runb");
    REQUIRE(run("gen --preset tiny --out " + data.string() + " --seed 7") == 0);
    REQUIRE(run("train --data " + data.string() + " --out " + runa.string() +
                " --seed 3 --preset tiny --method qcea") == 0);
    REQUIRE(run("train --data " + data.string() + " --out " + runb.string() +
                " --seed 3 --preset tiny --method qcea") == 0);
    // Determinism: byte-identical checkpoints and logs.
    REQUIRE(slurp(runa / "model.ckpt") == slurp(runb / "model.ckpt"));
    REQUIRE(slurp(runa / "train_log.jsonl") == slurp(runb / "train_log.jsonl"));

    REQUIRE(run("eval --data " + data.string() + " --ckpt " + (runa / "model.ckpt").string() +
                " --out " + (runa / "eval").string() + " --split test") == 0);
    REQUIRE(run("eval --data " + data.string() + " --ckpt " + (runa / "model.ckpt").string() +
                " --out " + (runb / "eval").string() + " --split test") == 0);
    REQUIRE(slurp(runa / "eval" / "metrics.tsv") == slurp(runb / "eval" / "metrics.tsv"));

    // hit@10 is the second metric column after n (k list 1,10,100).
    const double hit10 = metric_from_tsv(runa / "eval" / "metrics.tsv", "type", "overall", 2);
    REQUIRE(hit10 == 1.0);
}

TEST_CASE("procrustes through the CLI solves the planted rotation") {
    // Build a rotation fixture on disk.
    Rng rng = substream(5, "cli-rot");
    const int n = 16, d = 6;
    Eigen::MatrixXd gauss(d, d);
    for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i) gauss(i, j) = normal(rng);
    Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
    test::ManualBundle mb;
    mb.n_per_side = n;
    mb.d_q = mb.d_T = mb.d_W = d;
    for (EntityId i = 0; i < n; ++i) mb.anchors.emplace_back(i, i);
    DatasetBundle bundle = mb.build();
    EmbeddingTable wm;
    wm.dim = d;
    for (EntityId i = 0; i < n; ++i) wm.add(i, Eigen::VectorXd(q * bundle.tcm_emb.row(i)));
    bundle.wm_emb = std::move(wm);
    bundle.freeze();
    const fs::path data = temp_dir("rot_data");
    save_bundle(bundle, data);

    const fs::path runp = temp_dir("rot_run");
    REQUIRE(run("train --data " + data.string() + " --out " + runp.string() +
                " --method procrustes") == 0);
    REQUIRE(run("eval --data " + data.string() + " --ckpt " + (runp / "model.ckpt").string() +
                " --out " + (runp / "eval").string() + " --split train --mode full --k-list 1") == 0);
    const double hit1 = metric_from_tsv(runp / "eval" / "metrics.tsv", "full", "overall", 1);
    REQUIRE(hit1 == 1.0);
}

TEST_CASE("split writes a fresh assignment without touching the bundle") {
    const fs::path data = temp_dir("split_data");
    const fs::path out = temp_dir("split_out");
    REQUIRE(run("gen --preset tiny --out " + data.string() + " --seed 4") == 0);
    const std::string before = slurp(data / "splits.tsv");
    REQUIRE(run("split --data " + data.string() + " --out " + out.string() + " --seed 99") == 0);
    REQUIRE(slurp(data / "splits.tsv") == before);
    REQUIRE(fs::exists(out / "splits.tsv"));
    REQUIRE(slurp(out / "splits.tsv") != before);

    // The override is accepted downstream.
    const fs::path run2 = temp_dir("split_run");
    REQUIRE(run("train --data " + data.string() + " --out " + run2.string() +
                " --seed 1 --preset tiny --method qcea --epochs 2 --splits " +
                (out / "splits.tsv").string()) == 0);
}

TEST_CASE("predict writes ranked rows and simulate-rag produces the metric table") {
    const fs::path data = temp_dir("rag_data");
    const fs::path runr = temp_dir("rag_run");
    REQUIRE(run("gen --preset tiny --out " + data.string() + " --seed 7") == 0);
    REQUIRE(run("train --data " + data.string() + " --out " + runr.string() +
                " --seed 3 --preset tiny --method qcea --epochs 40") == 0);
    REQUIRE(run("predict --data " + data.string() + " --ckpt " + (runr / "model.ckpt").string() +
                " --out " + (runr / "pred").string() + " --split test --topk 3") == 0);
    std::string pred = slurp(runr / "pred" / "predictions.tsv");
    REQUIRE(pred.find("instance_id") == 0);
    REQUIRE(std::count(pred.begin(), pred.end(), '\n') > 1);

    REQUIRE(run("simulate-rag --data " + data.string() + " --ckpt " +
                (runr / "model.ckpt").string() + " --out " + (runr / "rag").string() +
                " --seed 2 --per-category 2 --settings oracle,predicted,topx=2,dropx=0.5,noalign") ==
            0);
    const std::string metrics = slurp(runr / "rag" / "rag_metrics.tsv");
    REQUIRE(metrics.find("oracle") != std::string::npos);
    REQUIRE(metrics.find("noalign") != std::string::npos);
    REQUIRE(fs::exists(runr / "rag" / "questions.jsonl"));
    REQUIRE(fs::exists(runr / "rag" / "traces.jsonl"));

    // Deterministic rerun.
    REQUIRE(run("simulate-rag --data " + data.string() + " --ckpt " +
                (runr / "model.ckpt").string() + " --out " + (runr / "rag2").string() +
                " --seed 2 --per-category 2 --settings oracle,predicted,topx=2,dropx=0.5,noalign") ==
            0);
    REQUIRE(slurp(runr / "rag" / "rag_metrics.tsv") == slurp(runr / "rag2" / "rag_metrics.tsv"));
    REQUIRE(slurp(runr / "rag" / "traces.jsonl") == slurp(runr / "rag2" / "traces.jsonl"));
}

TEST_CASE("bad inputs fail with a nonzero exit") {
    REQUIRE(run("gen --preset nonsense --out /tmp/qcea_cli_bad --seed 1") != 0);
    REQUIRE(run("eval --data /nonexistent --ckpt /nonexistent --out /tmp/qcea_cli_bad2") != 0);
    REQUIRE(run("definitely-not-a-command") != 0);
}
