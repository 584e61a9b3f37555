// Command-line pipelines: gen / split / train / eval / predict / simulate-rag.
// Every command resolves its configuration, writes a run manifest into the
// output directory, then produces its artifacts. All randomness flows from
// --seed through named substreams.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qcea/baselines.hpp"
#include "qcea/bundle.hpp"
#include "qcea/evaluation.hpp"
#include "qcea/gradients.hpp"
#include "qcea/manifest.hpp"
#include "qcea/model.hpp"
#include "qcea/preset.hpp"
#include "qcea/rag.hpp"
#include "qcea/sweep.hpp"
#include "qcea/synthetic.hpp"
#include "qcea/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::vector<int> parse_ints(const std::string& s) {
    std::vector<int> out;
    for (const auto& part : split_list(s))
        if (!part.empty()) out.push_back(std::stoi(part));
    return out;
}

std::vector<double> parse_doubles(const std::string& s) {
    std::vector<double> out;
    for (const auto& part : split_list(s))
        if (!part.empty()) out.push_back(std::stod(part));
    return out;
}

std::vector<qcea::RetrievalMode> parse_modes(const std::string& s) {
    std::vector<qcea::RetrievalMode> out;
    for (const auto& part : split_list(s)) {
        if (part == "full")
            out.push_back(qcea::RetrievalMode::Full);
        else if (part == "type")
            out.push_back(qcea::RetrievalMode::TypeConstrained);
        else
            qcea::fail(qcea::errkind::invalid_argument, "unknown mode '" + part + "'");
    }
    return out;
}

qcea::Split parse_split(const std::string& s) { return qcea::split_from_name(s); }

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p);
    qcea::require(f.good(), qcea::errkind::io, "cannot write " + p.string());
    f << text;
}

qcea::DatasetBundle load_data(const fs::path& dir, const std::string& splits_override) {
    qcea::DatasetBundle b = qcea::load_bundle(dir);
    if (!splits_override.empty()) {
        // Replace the bundle's split assignment from a standalone splits.tsv.
        std::map<std::pair<qcea::EntityId, qcea::EntityId>, qcea::Split> by_pair;
        std::ifstream f(splits_override);
        qcea::require(f.good(), qcea::errkind::io, "cannot open " + splits_override);
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            auto fields = qcea::detail::split_tabs(line);
            qcea::require(fields.size() == 3, qcea::errkind::validation,
                          "bad split line '" + line + "'");
            by_pair[{std::stoll(fields[0]), std::stoll(fields[1])}] =
                qcea::split_from_name(fields[2]);
        }
        b.splits.label.clear();
        for (const auto& pr : b.anchors.pairs) {
            auto it = by_pair.find(pr);
            qcea::require(it != by_pair.end(), qcea::errkind::validation,
                          "split override misses pair (" + std::to_string(pr.first) + "," +
                              std::to_string(pr.second) + ")");
            b.splits.label.push_back(it->second);
        }
        b.freeze();
    }
    return b;
}

// Shared hyperparameter flags; preset values are the defaults, explicit flags
// win.
struct HyperFlags {
    std::string preset;
    int dim = -1;
    std::string ranks;
    int gcn_layers = -1;
    int epochs = -1;
    int batch = -1;
    int negatives = -1;
    int positives = -1;
    double temp = -1.0;
    double lambda_dir = -1.0;
    double lambda_reg = -1.0;
    double lr = -1.0;
    double clip = -1.0;
    int patience = -1;
    int eval_every = -1;

    void attach(CLI::App* cmd) {
        cmd->add_option("--preset", preset, "preset supplying defaults (tiny|small|context|paper-scale-synthetic)");
        cmd->add_option("--dim", dim, "alignment dimension d");
        cmd->add_option("--ranks", ranks, "tucker ranks RS,RO,RI");
        cmd->add_option("--gcn-layers", gcn_layers, "graph encoder depth");
        cmd->add_option("--epochs", epochs, "training epochs");
        cmd->add_option("--batch", batch, "queries per direction per step");
        cmd->add_option("--negatives", negatives, "negatives per query (K)");
        cmd->add_option("--positives", positives, "max positives per query (P)");
        cmd->add_option("--temp", temp, "contrastive temperature");
        cmd->add_option("--lambda-dir", lambda_dir, "direction weight");
        cmd->add_option("--lambda-reg", lambda_reg, "l2 regularization weight");
        cmd->add_option("--lr", lr, "learning rate");
        cmd->add_option("--clip", clip, "global-norm gradient clip");
        cmd->add_option("--patience", patience, "evaluations without improvement before stopping");
        cmd->add_option("--eval-every", eval_every, "epochs between validation passes");
    }

    qcea::Preset resolve(std::uint64_t seed) const {
        qcea::Preset p = preset.empty() ? qcea::Preset{} : qcea::preset_by_name(preset);
        if (preset.empty()) {
            p.d = 256;
            p.rank_s = 16;
            p.rank_o = 128;
            p.rank_i = 128;
        }
        if (dim > 0) p.d = dim;
        if (!ranks.empty()) {
            auto r = parse_ints(ranks);
            qcea::require(r.size() == 3, qcea::errkind::invalid_argument,
                          "--ranks wants RS,RO,RI");
            p.rank_s = r[0];
            p.rank_o = r[1];
            p.rank_i = r[2];
        }
        if (gcn_layers > 0) p.gcn_layers = gcn_layers;
        if (epochs > 0) p.train.epochs = epochs;
        if (batch > 0) p.train.batch_size = batch;
        if (negatives > 0) p.train.negatives = negatives;
        if (positives > 0) p.train.positives = positives;
        if (temp > 0) p.train.tau = temp;
        if (lambda_dir >= 0) p.train.lambda_dir = lambda_dir;
        if (lambda_reg >= 0) p.train.lambda_reg = lambda_reg;
        if (lr > 0) p.train.lr = lr;
        if (clip > 0) p.train.clip_norm = clip;
        if (patience > 0) p.train.patience = patience;
        if (eval_every > 0) p.train.eval_every = eval_every;
        p.train.seed = seed;
        return p;
    }

    json to_json(const qcea::Preset& resolved) const {
        json j;
        j["preset"] = resolved.name;
        j["dim"] = resolved.d;
        j["ranks"] = {resolved.rank_s, resolved.rank_o, resolved.rank_i};
        j["gcn_layers"] = resolved.gcn_layers;
        j["epochs"] = resolved.train.epochs;
        j["batch"] = resolved.train.batch_size;
        j["negatives"] = resolved.train.negatives;
        j["positives"] = resolved.train.positives;
        j["temp"] = resolved.train.tau;
        j["lambda_dir"] = resolved.train.lambda_dir;
        j["lambda_reg"] = resolved.train.lambda_reg;
        j["lr"] = resolved.train.lr;
        j["clip"] = resolved.train.clip_norm;
        j["patience"] = resolved.train.patience;
        j["eval_every"] = resolved.train.eval_every;
        return j;
    }
};

int cmd_gen(const std::string& preset_name, const fs::path& out, std::uint64_t seed, double sigma,
            int context_descriptions) {
    qcea::Preset preset = qcea::preset_by_name(preset_name);
    if (sigma >= 0.0) preset.spec.sigma = sigma;
    if (context_descriptions > 0) preset.spec.context_descriptions = context_descriptions;

    qcea::RunManifest manifest;
    manifest.command = "gen";
    manifest.seed = seed;
    manifest.config["preset"] = preset_name;
    manifest.config["sigma"] = preset.spec.sigma;
    manifest.config["n_tcm"] = preset.spec.n_tcm;
    manifest.config["n_wm"] = preset.spec.n_wm;
    manifest.config["anchored_concepts"] = preset.spec.anchored_concepts;
    manifest.config["many_to_many_fraction"] = preset.spec.many_to_many_fraction;
    manifest.config["context_split_fraction"] = preset.spec.context_split_fraction;
    manifest.config["context_descriptions"] = preset.spec.context_descriptions;
    manifest.outputs = {"tcm.graph.txt", "wm.graph.txt", "anchors.tsv", "compat.tsv",
                        "queries.tsv",   "query.emb",    "tcm.emb",     "wm.emb",
                        "splits.tsv"};
    manifest.write(out);

    qcea::DatasetBundle b = qcea::generate_synthetic(preset.spec, seed);
    qcea::save_bundle(b, out);
    std::cout << "generated bundle: " << b.tcm.size() << " TCM entities, " << b.wm.size()
              << " WM entities, " << b.anchors.size() << " anchors, " << b.queries.size()
              << " query instances\n";
    return 0;
}

int cmd_split(const fs::path& data, const fs::path& out, std::uint64_t seed,
              const std::string& ratios_str) {
    auto ratios = parse_doubles(ratios_str);
    qcea::require(ratios.size() == 3, qcea::errkind::invalid_argument,
                  "--ratios wants train,val,test");

    qcea::RunManifest manifest;
    manifest.command = "split";
    manifest.seed = seed;
    manifest.config["ratios"] = ratios;
    manifest.add_input_dir(data);
    manifest.outputs = {"splits.tsv"};
    manifest.write(out);

    qcea::DatasetBundle b = qcea::load_bundle(data);
    qcea::SplitAssignment split =
        qcea::split_anchors(b.anchors, {ratios[0], ratios[1], ratios[2]}, seed);
    std::ofstream f(out / "splits.tsv");
    qcea::require(f.good(), qcea::errkind::io, "cannot write splits.tsv");
    for (std::size_t i = 0; i < b.anchors.pairs.size(); ++i)
        f << b.anchors.pairs[i].first << '\t' << b.anchors.pairs[i].second << '\t'
          << qcea::split_name(split.label[i]) << "\n";
    std::cout << "wrote " << (out / "splits.tsv").string() << "\n";
    return 0;
}

int cmd_train(const fs::path& data, const fs::path& out, std::uint64_t seed,
              const std::string& method, const std::string& source_input,
              const std::string& splits_override, const HyperFlags& hyper) {
    const qcea::Preset preset = hyper.resolve(seed);

    qcea::RunManifest manifest;
    manifest.command = "train";
    manifest.seed = seed;
    manifest.config = hyper.to_json(preset);
    manifest.config["method"] = method;
    manifest.config["source_input"] = source_input;
    manifest.add_input_dir(data);
    manifest.outputs = {"model.ckpt", "train_log.jsonl"};
    manifest.write(out);

    qcea::DatasetBundle b = load_data(data, splits_override);
    const qcea::SourceInput mode =
        source_input == "entity" ? qcea::SourceInput::Entity : qcea::SourceInput::Query;

    qcea::TrainResult info;
    if (method == "qcea") {
        qcea::ModelConfig mcfg = qcea::ModelConfig::for_bundle(b, preset.d, preset.rank_s,
                                                               preset.rank_o, preset.rank_i,
                                                               preset.gcn_layers);
        const fs::path diag = out / "diagnostic.ckpt";
        qcea::QceaTrainResult r = qcea::train_qcea(b, mcfg, preset.train, nullptr, &diag);
        qcea::save_checkpoint(r.best, out / "model.ckpt");
        info = std::move(r.info);
    } else if (method == "procrustes") {
        qcea::ProcrustesModel m = qcea::fit_procrustes(b, qcea::Split::Train);
        for (const auto& w : m.warnings) std::cerr << "warning: " << w << "\n";
        qcea::save_envelope(qcea::to_envelope(m), out / "model.ckpt");
    } else if (method == "biencoder") {
        qcea::BiEncoderTrainResult r = qcea::train_biencoder(b, preset.d, mode, preset.train);
        qcea::save_envelope(qcea::to_envelope(r.best), out / "model.ckpt");
        info = std::move(r.info);
    } else if (method == "mlp") {
        qcea::MlpTrainResult r = qcea::train_mlp(b, preset.d, mode, preset.train);
        qcea::save_envelope(qcea::to_envelope(r.best), out / "model.ckpt");
        info = std::move(r.info);
    } else {
        qcea::fail(qcea::errkind::invalid_argument, "unknown method '" + method + "'");
    }

    write_text(out / "train_log.jsonl", info.log_jsonl());
    std::cout << "trained " << method << ": best val metric "
              << (info.best_epoch >= 0 && std::isfinite(info.best_metric)
                      ? std::to_string(info.best_metric)
                      : std::string("n/a"))
              << " at epoch " << info.best_epoch << " (" << info.epochs_run << " epochs run)\n";
    return 0;
}

int cmd_eval(const fs::path& data, const fs::path& ckpt, const fs::path& out, std::uint64_t seed,
             const std::string& split_s, const std::string& modes_s, const std::string& klist_s,
             bool filtered, int threads, const std::string& sweep_ratios,
             const std::string& splits_override, const HyperFlags& hyper) {
    const auto modes = parse_modes(modes_s);
    const auto k_list = parse_ints(klist_s);
    const qcea::Split split = parse_split(split_s);

    qcea::RunManifest manifest;
    manifest.command = "eval";
    manifest.seed = seed;
    manifest.config["split"] = split_s;
    manifest.config["modes"] = modes_s;
    manifest.config["k_list"] = klist_s;
    manifest.config["filtered"] = filtered;
    if (!sweep_ratios.empty()) manifest.config["sweep_ratios"] = sweep_ratios;
    manifest.add_input_dir(data);
    if (!sweep_ratios.empty())
        manifest.outputs = {"sweep_summary.tsv"};
    else
        manifest.outputs = {"metrics.tsv", "metrics.jsonl"};
    if (fs::exists(ckpt)) manifest.add_input(ckpt);
    manifest.write(out);

    qcea::DatasetBundle b = load_data(data, splits_override);

    if (!sweep_ratios.empty()) {
        const qcea::Preset preset = hyper.resolve(seed);
        qcea::ModelConfig mcfg = qcea::ModelConfig::for_bundle(b, preset.d, preset.rank_s,
                                                               preset.rank_o, preset.rank_i,
                                                               preset.gcn_layers);
        auto results = qcea::seed_ratio_sweep(b, parse_doubles(sweep_ratios), mcfg, preset.train,
                                              seed, modes, k_list);
        std::ostringstream summary;
        summary << "ratio\tmode\thit@10\tmrr\n";
        char buf[32];
        for (const auto& rr : results) {
            std::snprintf(buf, sizeof buf, "%.2f", rr.ratio);
            const std::string rdir = std::string("ratio_") + buf;
            if (rr.skipped) {
                std::cerr << "warning: ratio " << rr.ratio << " yields an empty train set; skipped\n";
                continue;
            }
            fs::create_directories(out / rdir);
            write_text(out / rdir / "metrics.tsv", rr.report.render_tsv());
            write_text(out / rdir / "metrics.jsonl", rr.report.render_jsonl());
            for (const auto& mode : modes) {
                std::snprintf(buf, sizeof buf, "%.2f", rr.ratio);
                summary << buf << '\t' << qcea::mode_name(mode);
                std::snprintf(buf, sizeof buf, "%.6f", rr.report.value(mode, "overall", "hit@10"));
                summary << '\t' << buf;
                std::snprintf(buf, sizeof buf, "%.6f", rr.report.value(mode, "overall", "mrr"));
                summary << '\t' << buf << "\n";
            }
        }
        write_text(out / "sweep_summary.tsv", summary.str());
        std::cout << summary.str();
        return 0;
    }

    qcea::require(fs::exists(ckpt), qcea::errkind::io, "checkpoint not found: " + ckpt.string());
    auto scorer = qcea::scorer_from_checkpoint(b, ckpt);
    qcea::MetricReport report = qcea::evaluate(*scorer, b, split, modes, k_list, filtered, threads);
    write_text(out / "metrics.tsv", report.render_tsv());
    write_text(out / "metrics.jsonl", report.render_jsonl());
    std::cout << report.render_tsv() << "\n" << report.render_jsonl();
    return 0;
}

int cmd_predict(const fs::path& data, const fs::path& ckpt, const fs::path& out,
                const std::string& split_s, const std::string& mode_s, int topk,
                const std::string& splits_override) {
    const auto modes = parse_modes(mode_s);
    qcea::require(modes.size() == 1, qcea::errkind::invalid_argument,
                  "predict wants exactly one --mode");
    const qcea::Split split = parse_split(split_s);

    qcea::RunManifest manifest;
    manifest.command = "predict";
    manifest.config["split"] = split_s;
    manifest.config["mode"] = mode_s;
    manifest.config["topk"] = topk;
    manifest.add_input_dir(data);
    manifest.add_input(ckpt);
    manifest.outputs = {"predictions.tsv"};
    manifest.write(out);

    qcea::DatasetBundle b = load_data(data, splits_override);
    auto scorer = qcea::scorer_from_checkpoint(b, ckpt);

    const qcea::PoolIndex pools(b, split);
    std::ostringstream lines;
    lines << "instance_id\tentity_id\tdirection\trank\ttarget_id\tscore\n";
    char buf[32];
    for (const qcea::QueryInstance* q : qcea::eligible_queries(b, pools)) {
        qcea::RankedPrediction pred =
            qcea::rank_query_with_gt(*scorer, b, *q, modes[0], pools.of(q->entity_id, q->s));
        const std::size_t n = std::min<std::size_t>(pred.ranked.size(), static_cast<std::size_t>(topk));
        for (std::size_t r = 0; r < n; ++r) {
            std::snprintf(buf, sizeof buf, "%.6f", pred.scores[r]);
            lines << q->instance_id << '\t' << q->entity_id << '\t' << qcea::dir_index(q->s)
                  << '\t' << (r + 1) << '\t' << pred.ranked[r] << '\t' << buf << "\n";
        }
    }
    write_text(out / "predictions.tsv", lines.str());
    std::cout << "wrote " << (out / "predictions.tsv").string() << "\n";
    return 0;
}

std::vector<qcea::AlignmentSetting> parse_settings(const std::string& s, std::uint64_t seed) {
    std::vector<qcea::AlignmentSetting> out;
    for (const auto& part : split_list(s)) {
        if (part == "oracle")
            out.push_back(qcea::AlignmentSetting::oracle());
        else if (part == "predicted")
            out.push_back(qcea::AlignmentSetting::predicted());
        else if (part == "noalign")
            out.push_back(qcea::AlignmentSetting::no_align());
        else if (part.rfind("topx=", 0) == 0)
            out.push_back(qcea::AlignmentSetting::top_x_of(std::stoi(part.substr(5))));
        else if (part.rfind("dropx=", 0) == 0)
            out.push_back(qcea::AlignmentSetting::drop_x(std::stod(part.substr(6)),
                                                         qcea::splitmix64(seed)));
        else
            qcea::fail(qcea::errkind::invalid_argument, "unknown setting '" + part + "'");
    }
    return out;
}

int cmd_simulate_rag(const fs::path& data, const fs::path& ckpt, const fs::path& out,
                     std::uint64_t seed, const std::string& settings_s, int per_category, int k,
                     const std::string& mode_s, int drop_seeds, const std::string& sweep_x,
                     const std::string& sweep_drop, const std::string& splits_override) {
    const auto modes = parse_modes(mode_s);
    qcea::require(modes.size() == 1, qcea::errkind::invalid_argument,
                  "simulate-rag wants exactly one --mode");

    qcea::RunManifest manifest;
    manifest.command = "simulate-rag";
    manifest.seed = seed;
    manifest.config["settings"] = settings_s;
    manifest.config["per_category"] = per_category;
    manifest.config["k"] = k;
    manifest.config["mode"] = mode_s;
    manifest.config["drop_seeds"] = drop_seeds;
    manifest.add_input_dir(data);
    manifest.add_input(ckpt);
    manifest.outputs = {"questions.jsonl", "traces.jsonl", "rag_metrics.tsv"};
    manifest.write(out);

    qcea::DatasetBundle b = load_data(data, splits_override);
    auto scorer = qcea::scorer_from_checkpoint(b, ckpt);

    qcea::QuestionSet qs = qcea::generate_questions(b, per_category, seed);
    for (const auto& w : qs.warnings) std::cerr << "warning: " << w << "\n";

    json qlines = json::array();
    std::ostringstream qtext;
    for (const auto& q : qs.questions) {
        json j;
        j["id"] = q.id;
        j["category"] = q.category;
        j["source_id"] = q.source;
        j["direction"] = qcea::dir_index(q.s);
        j["hops"] = q.hops;
        j["gold_ids"] = q.gold;
        qtext << j.dump() << "\n";
    }
    write_text(out / "questions.jsonl", qtext.str());

    qcea::PredictionIndex predictions = qcea::build_predictions(*scorer, b, qs.questions, modes[0]);
    const auto settings = parse_settings(settings_s, seed);

    std::map<std::string, std::vector<qcea::RagTrace>> traces;
    std::ostringstream ttext;
    for (const auto& setting : settings) {
        auto t = qcea::run_setting(qs.questions, setting, b, predictions, k);
        for (const auto& tr : t) {
            json j;
            j["question_id"] = tr.question_id;
            j["setting"] = tr.setting;
            j["first_hop"] = tr.first_hop;
            j["evidence"] = tr.evidence;
            j["cross_hit"] = tr.cross_hit;
            j["recall"] = tr.recall;
            ttext << j.dump() << "\n";
        }
        traces[setting.label()] = std::move(t);
    }
    write_text(out / "traces.jsonl", ttext.str());

    qcea::RagReport report = qcea::rag_metrics(qs.questions, traces, k);
    write_text(out / "rag_metrics.tsv", report.render_tsv());
    std::cout << report.render_tsv();

    if (!sweep_x.empty() || !sweep_drop.empty()) {
        auto rows = qcea::sweep_settings(qs.questions, b, predictions, k,
                                         sweep_x.empty() ? std::vector<int>{} : parse_ints(sweep_x),
                                         sweep_drop.empty() ? std::vector<double>{}
                                                            : parse_doubles(sweep_drop),
                                         seed, drop_seeds);
        std::ostringstream sw;
        sw << "setting\tevidence_recall@" << k << "\tcross_system_hit_rate\n";
        char buf[32];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%.6f", r.recall);
            sw << r.setting << '\t' << buf;
            std::snprintf(buf, sizeof buf, "%.6f", r.hit_rate);
            sw << '\t' << buf << "\n";
        }
        write_text(out / "sweep.tsv", sw.str());
        std::cout << sw.str();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"query-conditioned entity alignment toolkit"};
    app.require_subcommand(1);

    std::string data, out, ckpt, method = "qcea", source_input = "query";
    std::string split_s = "test", modes_s = "full,type", single_mode_s = "type", klist_s = "1,10,100";
    std::string preset_name = "tiny", ratios = "0.6,0.2,0.2", settings_s = "oracle,predicted,noalign";
    std::string sweep_ratios, sweep_x, sweep_drop, splits_override;
    std::uint64_t seed = 0;
    double sigma = -1.0;
    int context_descriptions = -1, threads = 1, topk = 10, per_category = 10, k = 10,
        drop_seeds = 5;
    bool filtered = false;
    HyperFlags hyper;

    auto* gen = app.add_subcommand("gen", "generate a synthetic bundle directory");
    gen->add_option("--preset", preset_name, "bundle preset")->required();
    gen->add_option("--out", out, "output directory")->required();
    gen->add_option("--seed", seed, "random seed");
    gen->add_option("--sigma", sigma, "override preset noise level");
    gen->add_option("--context-descriptions", context_descriptions,
                    "override descriptions per context-split source");

    auto* split = app.add_subcommand("split", "re-split anchors at the pair level");
    split->add_option("--data", data)->required();
    split->add_option("--out", out)->required();
    split->add_option("--seed", seed);
    split->add_option("--ratios", ratios, "train,val,test ratios");

    auto* train = app.add_subcommand("train", "train a model or fit a baseline");
    train->add_option("--data", data)->required();
    train->add_option("--out", out)->required();
    train->add_option("--seed", seed);
    train->add_option("--method", method, "qcea|procrustes|mlp|biencoder");
    train->add_option("--source-input", source_input, "query|entity (mlp/biencoder)");
    train->add_option("--splits", splits_override, "override splits.tsv");
    hyper.attach(train);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (or run a seed-ratio sweep)");
    eval->add_option("--data", data)->required();
    eval->add_option("--ckpt", ckpt);
    eval->add_option("--out", out)->required();
    eval->add_option("--seed", seed);
    eval->add_option("--split", split_s, "train|val|test");
    eval->add_option("--mode", modes_s, "comma list of full|type");
    eval->add_option("--k-list", klist_s);
    eval->add_flag("--filtered", filtered, "drop other-split counterparts from candidates");
    eval->add_option("--threads", threads, "scoring fan-out");
    eval->add_option("--sweep-ratios", sweep_ratios, "seed-ratio sweep (retrains per ratio)");
    eval->add_option("--splits", splits_override, "override splits.tsv");
    HyperFlags eval_hyper;
    eval_hyper.attach(eval);

    auto* predict = app.add_subcommand("predict", "write top-k ranked candidates per query");
    predict->add_option("--data", data)->required();
    predict->add_option("--ckpt", ckpt)->required();
    predict->add_option("--out", out)->required();
    predict->add_option("--split", split_s);
    predict->add_option("--mode", single_mode_s, "full|type (single)");
    predict->add_option("--topk", topk);
    predict->add_option("--splits", splits_override, "override splits.tsv");

    auto* rag = app.add_subcommand("simulate-rag", "evidence-retrieval simulation");
    rag->add_option("--data", data)->required();
    rag->add_option("--ckpt", ckpt)->required();
    rag->add_option("--out", out)->required();
    rag->add_option("--seed", seed);
    rag->add_option("--settings", settings_s,
                    "comma list: oracle,predicted,topx=N,dropx=R,noalign");
    rag->add_option("--per-category", per_category);
    rag->add_option("--k", k, "first-hop candidate cap");
    rag->add_option("--mode", single_mode_s, "retrieval mode for predictions (single)");
    rag->add_option("--drop-seeds", drop_seeds, "removal seeds averaged in sweeps");
    rag->add_option("--sweep-x", sweep_x, "topx sweep values, e.g. 1,2,...,10");
    rag->add_option("--sweep-drop", sweep_drop, "dropx sweep ratios");
    rag->add_option("--splits", splits_override, "override splits.tsv");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(preset_name, out, seed, sigma, context_descriptions);
        if (split->parsed()) return cmd_split(data, out, seed, ratios);
        if (train->parsed())
            return cmd_train(data, out, seed, method, source_input, splits_override, hyper);
        if (eval->parsed())
            return cmd_eval(data, ckpt, out, seed, split_s, modes_s, klist_s, filtered, threads,
                            sweep_ratios, splits_override, eval_hyper);
        if (predict->parsed())
            return cmd_predict(data, ckpt, out, split_s, single_mode_s, topk, splits_override);
        if (rag->parsed())
            return cmd_simulate_rag(data, ckpt, out, seed, settings_s, per_category, k,
                                    single_mode_s, drop_seeds, sweep_x, sweep_drop,
                                    splits_override);
    } catch (const qcea::Error& e) {
        std::cerr << "error " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
