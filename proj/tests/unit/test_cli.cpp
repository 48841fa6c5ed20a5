#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "esiqa/cli/cli.hpp"
#include "esiqa/data/trainer.hpp"
#include "esiqa/stats/ratings.hpp"
#include "esiqa/stats/subjective.hpp"
#include "../common/dataset.hpp"
#include "../common/synthetic.hpp"
#include "../common/testkit.hpp"

using namespace esiqa;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "esiqa");
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string write_ratings_file(const std::string& path, std::size_t images, std::size_t raters, std::uint64_t seed,
                               DisplayMode mode = DisplayMode::window_3d) {
    std::mt19937_64 rng(seed);
    const auto study = testkit::synthetic_study(images, raters, 0, 1.0, rng, mode);
    std::ofstream f(path);
    stats::write_ratings(f, study.records);
    return path;
}

}  // namespace

TEST_CASE("mos happy path") {
    testkit::TempDir dir("cli_mos");
    const auto ratings = write_ratings_file(dir.file("r.csv"), 12, 6, 1);
    const auto r = run({"mos", "--ratings", ratings, "--mode", "3d_window", "--out", dir.file("mos.csv"), "--rejections",
                        dir.file("rej.csv")});
    CHECK(r.code == 0);
    const auto mos = stats::read_mos_file(dir.file("mos.csv"));
    CHECK(mos.size() == 12);
    CHECK(testkit::slurp(dir.file("rej.csv")).rfind("participant_id,mode,p,q,rejected\n", 0) == 0);

    // same inputs, same bytes
    run({"mos", "--ratings", ratings, "--mode", "3d_window", "--out", dir.file("mos2.csv")});
    CHECK(testkit::slurp(dir.file("mos.csv")) == testkit::slurp(dir.file("mos2.csv")));
}

TEST_CASE("usage and input errors exit 1") {
    testkit::TempDir dir("cli_err");
    const auto missing = run({"mos", "--mode", "3d_window", "--out", dir.file("m.csv")});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("--ratings") != std::string::npos);
    CHECK(missing.err.find("Usage") != std::string::npos);

    CHECK(run({"frobnicate"}).code == 1);
    CHECK(run({"mos", "--bogus"}).code == 1);
    CHECK(run({}).code == 1);
    const auto help = run({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("discriminability") != std::string::npos);

    const auto ratings = write_ratings_file(dir.file("r.csv"), 5, 4, 2);
    CHECK(run({"mos", "--ratings", dir.file("absent.csv"), "--mode", "3d_window", "--out", dir.file("m.csv")}).code == 1);
    CHECK(run({"mos", "--ratings", ratings, "--mode", "5d", "--out", dir.file("m.csv")}).code == 1);
    // the ratings only cover 3d_window
    CHECK(run({"mos", "--ratings", ratings, "--mode", "2d", "--out", dir.file("m.csv")}).code == 1);

    std::ofstream(dir.file("broken.csv")) << "participant_id,image_id,mode,score,timestamp_iso8601\np1,i1,3d_window,12,x\n";
    const auto bad = run({"mos", "--ratings", dir.file("broken.csv"), "--mode", "3d_window", "--out", dir.file("m.csv")});
    CHECK(bad.code == 1);
    CHECK_FALSE(bad.err.empty());

    std::ofstream(dir.file("file")) << "x";
    CHECK(run({"mos", "--ratings", ratings, "--mode", "3d_window", "--out", dir.file("file") + "/m.csv"}).code == 1);
}

TEST_CASE("stats subcommands write their reports") {
    testkit::TempDir dir("cli_stats");
    const auto ratings = write_ratings_file(dir.file("r.csv"), 8, 5, 3);
    CHECK(run({"discriminability", "--ratings", ratings, "--mode", "3d_window", "--out", dir.file("d.csv"), "--trials", "5",
               "--seed", "1"})
              .code == 0);
    const std::string d = testkit::slurp(dir.file("d.csv"));
    CHECK(d.rfind("size,discriminability,mean_ci,trials,seed\n", 0) == 0);
    CHECK(std::count(d.begin(), d.end(), '\n') == 5);  // header plus sizes 2..5
    run({"discriminability", "--ratings", ratings, "--mode", "3d_window", "--out", dir.file("d2.csv"), "--trials", "5", "--seed",
         "1"});
    CHECK(d == testkit::slurp(dir.file("d2.csv")));

    {
        std::ofstream s(dir.file("scores.csv"));
        s << "image_id,method,score\n";
        for (int i = 0; i < 8; ++i) {
            s << testkit::image_name(i) << ",a," << i << "\n";
            s << testkit::image_name(i) << ",b," << (i * 5) % 8 << "\n";
        }
    }
    const auto roc = run({"roc", "--ratings", ratings, "--mode", "3d_window", "--scores", dir.file("scores.csv"), "--out",
                          dir.file("roc"), "--resamples", "50"});
    CHECK(roc.code == 0);
    CHECK(testkit::slurp(dir.file("roc/evaluation.csv")).rfind("method,mode,srcc,krcc,plcc,auc_ds,auc_bw\n", 0) == 0);
    CHECK(fs::exists(dir.file("roc/significance_better_vs_worse.txt")));

    CHECK(run({"report", "--ratings", ratings, "--out", dir.file("rep")}).code == 0);
    CHECK(testkit::slurp(dir.file("rep/mos_histograms.csv")).rfind("series,bin_center", 0) == 0);
}

TEST_CASE("train, eval and mode mismatch") {
    testkit::TempDir dir("cli_train");
    std::mt19937_64 rng(4);
    testkit::DatasetSpec spec;
    spec.images = 20;
    spec.side = 32;
    spec.label_modes = {DisplayMode::flat_2d};
    const auto manifest = testkit::write_dataset(dir.path().string(), spec, rng);

    data::TrainConfig c;
    c.model = model::ModelConfig::reduced(DisplayMode::flat_2d);
    c.epochs = 1;
    c.batch_size = 4;
    c.to_kv().save(dir.file("train.cfg"));

    const auto trained = run({"train", "--manifest", manifest, "--config", dir.file("train.cfg"), "--seed", "3", "--out",
                              dir.file("run")});
    INFO(trained.err);
    REQUIRE(trained.code == 0);
    for (const char* f : {"split.csv", "train_config.txt", "model.ckpt", "loss_trace.csv"}) CHECK(fs::exists(dir.file("run/") + f));
    CHECK(testkit::slurp(dir.file("run/loss_trace.csv")).find("\n3,0,0,") != std::string::npos);

    const std::string ckpt = dir.file("run/model.ckpt");
    const auto e1 = run({"eval", "--manifest", manifest, "--checkpoint", ckpt, "--mode", "2d", "--out", dir.file("e1")});
    INFO(e1.err);
    CHECK(e1.code == 0);
    run({"eval", "--manifest", manifest, "--checkpoint", ckpt, "--mode", "2d", "--out", dir.file("e2")});
    CHECK(testkit::slurp(dir.file("e1/evaluation.csv")) == testkit::slurp(dir.file("e2/evaluation.csv")));
    CHECK(testkit::slurp(dir.file("e1/predictions.csv")) == testkit::slurp(dir.file("e2/predictions.csv")));

    const auto mismatch = run({"eval", "--manifest", manifest, "--checkpoint", ckpt, "--mode", "3d_window", "--out", dir.file("e3")});
    CHECK(mismatch.code == 1);
    CHECK(mismatch.err.find("mode mismatch") != std::string::npos);

    std::ofstream(dir.file("junk.ckpt")) << "ESIQACKP garbage";
    CHECK(run({"eval", "--manifest", manifest, "--checkpoint", dir.file("junk.ckpt"), "--mode", "2d", "--out", dir.file("e4")})
              .code == 1);

    CHECK(run({"features", "--manifest", manifest, "--out", dir.file("feat")}).code == 0);
    CHECK(fs::exists(dir.file("feat/features.csv")));
    CHECK(fs::exists(dir.file("feat/feature_density.csv")));

    CHECK(run({"heatmap", "--checkpoint", ckpt, "--manifest", manifest, "--image", "img001", "--out", dir.file("heat")}).code == 0);
    CHECK(fs::exists(dir.file("heat/heatmap.csv")));
    CHECK(run({"heatmap", "--checkpoint", ckpt, "--manifest", manifest, "--image", "nope", "--out", dir.file("heat")}).code == 1);
}
