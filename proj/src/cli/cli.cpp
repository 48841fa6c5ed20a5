#include "esiqa/cli/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "esiqa/csv.hpp"
#include "esiqa/data/evaluate.hpp"
#include "esiqa/data/features.hpp"
#include "esiqa/data/image.hpp"
#include "esiqa/data/manifest.hpp"
#include "esiqa/data/reports.hpp"
#include "esiqa/data/trainer.hpp"
#include "esiqa/metrics/roc.hpp"
#include "esiqa/model/checkpoint.hpp"
#include "esiqa/model/heatmap.hpp"
#include "esiqa/service/study_service.hpp"
#include "esiqa/stats/subjective.hpp"

namespace esiqa::cli {

namespace fs = std::filesystem;

namespace {

struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct Options {
    std::string manifest;
    std::string ratings;
    std::string mode;
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;

    // subcommand specific
    std::string rejections;
    std::vector<std::size_t> sizes;
    std::size_t trials = 100;
    double alpha = 0.05;
    std::vector<std::string> mos_files;
    double fraction = 0.8;
    std::string checkpoint;
    std::string subset = "test";
    std::string method = "esiqanet";
    std::string scores;
    std::size_t resamples = 1000;
    std::string ratings_log;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string image;
};

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    return out;
}

fs::path out_dir(const Options& o) {
    fs::path dir(o.out);
    fs::create_directories(dir);
    return dir;
}

DisplayMode mode_of(const Options& o) { return parse_mode(o.mode); }

std::vector<stats::MosEntry> read_mos_tables(const std::vector<std::string>& files) {
    std::vector<stats::MosEntry> all;
    for (const auto& f : files) {
        auto part = stats::read_mos_file(f);
        all.insert(all.end(), part.begin(), part.end());
    }
    return all;
}

data::Manifest load_manifest_with_labels(const Options& o) {
    data::Manifest m = data::Manifest::load(o.manifest);
    if (!o.mos_files.empty()) m.attach_labels(read_mos_tables(o.mos_files));
    return m;
}

int cmd_mos(const Options& o, std::ostream& out) {
    const auto records = stats::read_ratings_file(o.ratings);
    const DisplayMode mode = mode_of(o);
    stats::RejectionReport report;
    const auto mos = stats::mos_pipeline(records, mode, &report);
    auto f = open_out(o.out);
    stats::write_mos(f, mos);
    if (!o.rejections.empty()) {
        auto r = open_out(o.rejections);
        csv::write_row(r, {"participant_id", "mode", "p", "q", "rejected"});
        for (const auto& s : report.subjects) {
            csv::write_row(r, {s.participant_id, std::string(mode_name(mode)), std::to_string(s.p), std::to_string(s.q),
                               s.rejected ? "1" : "0"});
        }
    }
    out << "wrote " << mos.size() << " MOS entries for mode " << mode_name(mode) << " (" << report.retained.size() << " of "
        << report.subjects.size() << " participants retained) to " << o.out << "\n";
    return kExitOk;
}

int cmd_discriminability(const Options& o, std::ostream& out) {
    const auto records = stats::read_ratings_file(o.ratings);
    const auto matrix = stats::build_matrix(records, mode_of(o));
    stats::CurveOptions opt;
    opt.subset_sizes = o.sizes;
    if (opt.subset_sizes.empty()) {
        for (std::size_t s = 2; s <= matrix.subjects.size(); ++s) opt.subset_sizes.push_back(s);
    }
    opt.trials = o.trials;
    opt.alpha = o.alpha;
    opt.seed = o.seed.value_or(0);
    const auto disc = stats::discriminability_curve(matrix, opt);
    const auto ci = stats::mean_ci_curve(matrix, opt);
    auto f = open_out(o.out);
    csv::write_row(f, {"size", "discriminability", "mean_ci", "trials", "seed"});
    for (const auto& [size, d] : disc) {
        csv::write_row(f, {std::to_string(size), csv::fmt(d), csv::fmt(ci.at(size)), std::to_string(opt.trials),
                           std::to_string(opt.seed)});
    }
    out << "wrote " << disc.size() << " curve points to " << o.out << "\n";
    return kExitOk;
}

int cmd_features(const Options& o, std::ostream& out) {
    const auto table = data::low_level_features(data::Manifest::load(o.manifest));
    const fs::path dir = out_dir(o);
    auto f = open_out(dir / "features.csv");
    data::write_feature_csv(f, table);
    auto d = open_out(dir / "feature_density.csv");
    data::write_density_csv(d, table);
    if (table.degenerate) out << "single-image dataset: features reported raw, normalization skipped\n";
    out << "wrote features of " << table.image_ids.size() << " images to " << dir.string() << "\n";
    return kExitOk;
}

data::TrainConfig train_config(const Options& o) {
    data::TrainConfig c;
    if (!o.config.empty()) c = data::TrainConfig::from_kv(KvConfig::load(o.config));
    if (!o.mode.empty()) c.model.mode = mode_of(o);
    c.model = c.model.normalized();
    if (o.seed) c.seed = *o.seed;
    c.validate();
    return c;
}

void write_split(const fs::path& path, const data::Manifest& m, const data::SplitIndices& split, std::uint64_t seed) {
    auto f = open_out(path);
    csv::write_row(f, {"image_id", "scene_id", "side", "seed"});
    for (std::size_t i : split.train) csv::write_row(f, {m.entries[i].image_id, m.entries[i].scene_id, "train", std::to_string(seed)});
    for (std::size_t i : split.test) csv::write_row(f, {m.entries[i].image_id, m.entries[i].scene_id, "test", std::to_string(seed)});
}

int cmd_train(const Options& o, std::ostream& out) {
    const data::TrainConfig config = train_config(o);
    const data::Manifest m = load_manifest_with_labels(o);
    const data::SplitSpec spec{config.seed, o.fraction};
    const auto split = data::load_and_split(m, spec, config.model.input_side, config.model.mode);
    const fs::path dir = out_dir(o);
    write_split(dir / "split.csv", m, split.indices, config.seed);
    config.to_kv().save((dir / "train_config.txt").string());
    data::TrainOutputs outputs{(dir / "model.ckpt").string(), (dir / "loss_trace.csv").string(), dir.string()};
    const auto result = data::train(split.train, config, split.test.samples.empty() ? nullptr : &split.test, outputs);
    out << "trained " << result.steps << " steps; best validation loss " << result.best_validation_loss << " at step "
        << result.best_step << "; checkpoint " << outputs.checkpoint_path << "\n";
    return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
    const DisplayMode mode = mode_of(o);
    auto loaded = model::load_checkpoint(o.checkpoint);
    const model::EsiqaNet& net = *loaded.model;
    if (net.config().mode != mode) {
        throw data::ModeMismatchError("mode mismatch: checkpoint " + o.checkpoint + " was trained for " +
                                      std::string(mode_name(net.config().mode)) + ", requested " + std::string(mode_name(mode)));
    }
    const data::Manifest m = load_manifest_with_labels(o);
    const std::uint64_t seed = o.seed.value_or(static_cast<std::uint64_t>(loaded.meta.get_int("seed", 0)));
    std::vector<std::size_t> indices;
    if (o.subset == "all") {
        for (std::size_t i = 0; i < m.entries.size(); ++i) indices.push_back(i);
    } else {
        const auto split = data::split_manifest(m, {seed, o.fraction});
        data::validate_split(m, split);
        indices = o.subset == "train" ? split.train : split.test;
    }
    const auto test = data::load_samples(m, indices, net.config().input_side, mode);
    std::optional<data::RawScores> raw;
    if (!o.ratings.empty()) raw = data::raw_scores_from_ratings(stats::read_ratings_file(o.ratings), mode);
    const auto ev = data::evaluate(test, net, mode, raw ? &*raw : nullptr, o.method);

    const fs::path dir = out_dir(o);
    auto e = open_out(dir / "evaluation.csv");
    data::write_evaluation(e, {ev.row});
    auto p = open_out(dir / "predictions.csv");
    data::write_predictions(p, mode, ev.scores.image_ids, ev.scores.predicted, ev.scores.mos);
    out << "srcc " << csv::fmt(ev.row.srcc) << ", krcc " << csv::fmt(ev.row.krcc) << ", plcc " << csv::fmt(ev.row.plcc) << " over "
        << ev.scores.image_ids.size() << " images; reports in " << dir.string() << "\n";
    return kExitOk;
}

int cmd_roc(const Options& o, std::ostream& out) {
    const DisplayMode mode = mode_of(o);
    const auto records = stats::read_ratings_file(o.ratings);
    const auto raw = data::raw_scores_from_ratings(records, mode);
    std::map<std::string, double> mos;
    for (const auto& e : stats::mos_pipeline(records, mode)) mos[e.image_id] = e.mos;

    const csv::Table t = csv::read_file(o.scores);
    const std::size_t ci = t.column("image_id"), cm = t.column("method"), cs = t.column("score");
    std::map<std::string, std::map<std::string, double>> by_method;
    for (const auto& row : t.rows) {
        try {
            by_method[row[cm]][row[ci]] = std::stod(row[cs]);
        } catch (const std::logic_error&) {
            throw InputError("scores: unparseable score for image " + row[ci]);
        }
    }
    if (by_method.empty()) throw InputError("scores: no rows in " + o.scores);

    std::vector<std::string> methods;
    std::vector<data::EvaluationRow> rows;
    std::vector<metrics::RocResult> ds, bw;
    for (const auto& [method, scores] : by_method) {
        data::MetricScores ms;
        for (const auto& [id, m] : mos) {
            auto it = scores.find(id);
            if (it == scores.end()) throw InputError("scores: method " + method + " has no score for image " + id);
            ms.image_ids.push_back(id);
            ms.predicted.push_back(it->second);
            ms.mos.push_back(m);
        }
        const auto ev = data::evaluate_scores(method, mode, std::move(ms), &raw);
        methods.push_back(method);
        rows.push_back(ev.row);
        if (ev.roc_ds) ds.push_back(*ev.roc_ds);
        if (ev.roc_bw) bw.push_back(*ev.roc_bw);
    }
    const fs::path dir = out_dir(o);
    auto e = open_out(dir / "evaluation.csv");
    data::write_evaluation(e, rows);
    const std::uint64_t seed = o.seed.value_or(0);
    auto write_matrix = [&](const char* name, const std::vector<metrics::RocResult>& results) {
        if (results.size() != methods.size() || methods.size() < 2) return;
        const auto sig = metrics::auc_significance_matrix(methods, results, o.resamples, o.alpha, seed);
        auto f = open_out(dir / name);
        f << metrics::format_significance_matrix(sig);
    };
    write_matrix("significance_different_vs_similar.txt", ds);
    write_matrix("significance_better_vs_worse.txt", bw);
    out << "evaluated " << methods.size() << " methods on " << mos.size() << " images; reports in " << dir.string() << "\n";
    return kExitOk;
}

int cmd_report(const Options& o, std::ostream& out) {
    data::MosTables tables;
    std::vector<stats::MosEntry> entries;
    if (!o.mos_files.empty()) {
        entries = read_mos_tables(o.mos_files);
    } else if (!o.ratings.empty()) {
        const auto records = stats::read_ratings_file(o.ratings);
        std::set<DisplayMode> modes;
        for (const auto& r : records) modes.insert(r.mode);
        for (DisplayMode m : modes) {
            auto part = stats::mos_pipeline(records, m);
            entries.insert(entries.end(), part.begin(), part.end());
        }
    } else {
        throw InputError("report: give --mos tables or --ratings");
    }
    for (const auto& e : entries) tables[e.mode].push_back(e);
    std::optional<data::Manifest> manifest;
    if (!o.manifest.empty()) manifest = data::Manifest::load(o.manifest);
    const auto reports = data::mos_reports(tables, manifest ? &*manifest : nullptr);
    const fs::path dir = out_dir(o);
    auto a = open_out(dir / "mos_histograms.csv");
    data::write_histograms(a, reports.per_mode);
    auto b = open_out(dir / "mode_differences.csv");
    data::write_histograms(b, reports.differences);
    if (manifest) {
        auto c = open_out(dir / "matched_differences.csv");
        data::write_histograms(c, reports.matched);
    }
    out << "wrote MOS reports for " << tables.size() << " modes to " << dir.string() << "\n";
    return kExitOk;
}

int cmd_serve(const Options& o, std::ostream& out) {
    service::StudyService svc(data::Manifest::load(o.manifest), o.ratings_log, o.seed.value_or(0));
    out << "serving " << svc.image_count() << " images on http://" << o.host << ":" << o.port << "\n" << std::flush;
    svc.listen(o.host, o.port);
    return kExitOk;
}

std::array<std::uint8_t, 3> colormap(double v) {
    auto c = [](double x) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(x, 0.0, 1.0))); };
    return {c(v), c(1.0 - std::abs(2.0 * v - 1.0)), c(1.0 - v)};
}

int cmd_heatmap(const Options& o, std::ostream& out) {
    auto loaded = model::load_checkpoint(o.checkpoint);
    const model::EsiqaNet& net = *loaded.model;
    const data::Manifest m = data::Manifest::load(o.manifest);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        if (m.entries[i].image_id == o.image) idx.push_back(i);
    }
    if (idx.empty()) throw InputError("heatmap: image " + o.image + " not in manifest");
    const std::size_t side = net.config().input_side;
    const auto ds = data::load_samples(m, idx, side, net.config().mode);
    const auto& s = ds.samples.front();
    std::optional<Tensor> right;
    if (s.right) right = data::stack_batch({&*s.right}, side);
    NoGradGuard guard;
    std::mt19937_64 rng(0);
    const auto res = net.forward(data::stack_batch({&s.left}, side), right, false, rng);

    const fs::path dir = out_dir(o);
    auto table = open_out(dir / "heatmap.csv");
    csv::write_row(table, {"image_id", "stage", "y", "x", "value"});
    for (const auto& st : res.stages) {
        const auto hm = model::token_heatmap(st.enhanced, st.side, st.side);
        data::Image img;
        img.width = img.height = side;
        img.rgb.resize(side * side * 3);
        for (std::size_t y = 0; y < side; ++y) {
            for (std::size_t x = 0; x < side; ++x) {
                const auto rgb = colormap(hm.at(y * st.side / side, x * st.side / side));
                std::copy(rgb.begin(), rgb.end(), img.rgb.begin() + static_cast<long>((y * side + x) * 3));
            }
        }
        data::save_png((dir / ("heatmap_stage" + std::to_string(st.stage + 1) + ".png")).string(), img);
        for (std::size_t y = 0; y < hm.height; ++y) {
            for (std::size_t x = 0; x < hm.width; ++x) {
                csv::write_row(table, {o.image, std::to_string(st.stage + 1), std::to_string(y), std::to_string(x), csv::fmt(hm.at(y, x))});
            }
        }
    }
    out << "predicted MOS " << csv::fmt(res.score.data()[0] * data::kLabelScale) << "; heatmaps in " << dir.string() << "\n";
    return kExitOk;
}

bool is_input_error(const std::exception& e) {
    return dynamic_cast<const std::invalid_argument*>(&e) || dynamic_cast<const std::domain_error*>(&e) ||
           dynamic_cast<const data::ImageError*>(&e) || dynamic_cast<const model::CheckpointError*>(&e) ||
           dynamic_cast<const data::LeakageError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Stereo image quality toolkit: subjective statistics, metric evaluation, training and the rating service",
                 "esiqa"};
    app.require_subcommand(1);
    Options o;
    const std::string mode_help = "display mode: 2d, 3d_window or 3d_immersive";

    auto* mos = app.add_subcommand("mos", "MOS table from a ratings CSV");
    mos->add_option("--ratings", o.ratings, "ratings CSV")->required();
    mos->add_option("--mode", o.mode, mode_help)->required();
    mos->add_option("--out", o.out, "output MOS CSV")->required();
    mos->add_option("--rejections", o.rejections, "optional per-participant screening CSV");

    auto* disc = app.add_subcommand("discriminability", "discriminability and mean CI against panel size");
    disc->add_option("--ratings", o.ratings, "ratings CSV")->required();
    disc->add_option("--mode", o.mode, mode_help)->required();
    disc->add_option("--out", o.out, "output CSV")->required();
    disc->add_option("--sizes", o.sizes, "panel sizes (default 2..N)")->delimiter(',');
    disc->add_option("--trials", o.trials, "random panels per size")->check(CLI::PositiveNumber);
    disc->add_option("--alpha", o.alpha, "significance level")->check(CLI::Range(1e-9, 1.0 - 1e-9));
    disc->add_option("--seed", o.seed, "random seed");

    auto* feat = app.add_subcommand("features", "brightness, contrast, colorfulness and sharpness of the left views");
    feat->add_option("--manifest", o.manifest, "dataset manifest JSON")->required();
    feat->add_option("--out", o.out, "output directory")->required();

    auto* train = app.add_subcommand("train", "train a model on the training split");
    train->add_option("--manifest", o.manifest, "dataset manifest JSON")->required();
    train->add_option("--mode", o.mode, mode_help);
    train->add_option("--config", o.config, "key = value configuration");
    train->add_option("--seed", o.seed, "seed for split, initialization and batches");
    train->add_option("--out", o.out, "output directory")->required();
    train->add_option("--mos", o.mos_files, "MOS CSV(s) used as labels");
    train->add_option("--fraction", o.fraction, "training fraction")->check(CLI::Range(0.01, 0.99));

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--manifest", o.manifest, "dataset manifest JSON")->required();
    eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
    eval->add_option("--mode", o.mode, mode_help)->required();
    eval->add_option("--out", o.out, "output directory")->required();
    eval->add_option("--seed", o.seed, "split seed (default: the checkpoint's)");
    eval->add_option("--ratings", o.ratings, "ratings CSV enabling the ROC analyses");
    eval->add_option("--mos", o.mos_files, "MOS CSV(s) used as labels");
    eval->add_option("--subset", o.subset, "test, train or all")->check(CLI::IsMember({"test", "train", "all"}));
    eval->add_option("--fraction", o.fraction, "training fraction of the split")->check(CLI::Range(0.01, 0.99));
    eval->add_option("--method", o.method, "method name in the report");

    auto* roc = app.add_subcommand("roc", "correlations, ROC analyses and AUC significance of objective scores");
    roc->add_option("--ratings", o.ratings, "ratings CSV")->required();
    roc->add_option("--mode", o.mode, mode_help)->required();
    roc->add_option("--scores", o.scores, "CSV image_id,method,score")->required();
    roc->add_option("--out", o.out, "output directory")->required();
    roc->add_option("--seed", o.seed, "bootstrap seed");
    roc->add_option("--resamples", o.resamples, "bootstrap resamples")->check(CLI::PositiveNumber);
    roc->add_option("--alpha", o.alpha, "significance level")->check(CLI::Range(1e-9, 1.0 - 1e-9));

    auto* report = app.add_subcommand("report", "MOS and MOS-difference histograms");
    report->add_option("--mos", o.mos_files, "MOS CSV(s)");
    report->add_option("--ratings", o.ratings, "ratings CSV (MOS computed per mode)");
    report->add_option("--manifest", o.manifest, "manifest for captured/synthesized pairs");
    report->add_option("--out", o.out, "output directory")->required();

    auto* serve = app.add_subcommand("serve", "run the rating study HTTP service");
    serve->add_option("--manifest", o.manifest, "dataset manifest JSON")->required();
    serve->add_option("--ratings-log", o.ratings_log, "append-only ratings CSV")->required();
    serve->add_option("--port", o.port, "TCP port")->check(CLI::Range(0, 65535));
    serve->add_option("--host", o.host, "bind address");
    serve->add_option("--seed", o.seed, "study seed");

    auto* heat = app.add_subcommand("heatmap", "per-stage feature heatmaps of one image");
    heat->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
    heat->add_option("--manifest", o.manifest, "dataset manifest JSON")->required();
    heat->add_option("--image", o.image, "image id")->required();
    heat->add_option("--out", o.out, "output directory")->required();

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kExitInput;
    }

    try {
        if (*mos) return cmd_mos(o, out);
        if (*disc) return cmd_discriminability(o, out);
        if (*feat) return cmd_features(o, out);
        if (*train) return cmd_train(o, out);
        if (*eval) return cmd_eval(o, out);
        if (*roc) return cmd_roc(o, out);
        if (*report) return cmd_report(o, out);
        if (*serve) return cmd_serve(o, out);
        if (*heat) return cmd_heatmap(o, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return is_input_error(e) ? kExitInput : kExitInternal;
    }
    err << app.help();
    return kExitInput;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace esiqa::cli
