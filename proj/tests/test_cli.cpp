// End-to-end checks of the command-line tool: every subcommand is spawned as
// a real process and judged on exit codes and the files it writes.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "adml/checkpoint.hpp"
#include "adml/features_io.hpp"

namespace {

namespace fs = std::filesystem;

const fs::path kScratch = ADML_TEST_TMPDIR;

struct CommandResult {
    int exit_code = -1;
    std::string output;
};

CommandResult run_cli(const std::string& args) {
    const fs::path out_file = kScratch / "cmd_output.txt";
    const std::string cmd =
        std::string(ADML_CLI_PATH) + " " + args + " > " + out_file.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    CommandResult res;
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_file);
    std::stringstream ss;
    ss << in.rdbuf();
    res.output = ss.str();
    return res;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string base_config() {
    return "loss.variant = softmax\n"
           "net.input_dim = 8\n"
           "net.hidden_dims = 12\n"
           "net.feature_dim = 6\n"
           "sgd.base_lr = 0.1\n"
           "sgd.lr_drops = \n"
           "sgd.max_iter = 60\n"
           "sgd.batch_size = 32\n"
           "data.kind = blobs\n"
           "data.blob_classes = 4\n"
           "data.blob_dim = 8\n"
           "data.blob_per_class = 24\n"
           "data.blob_spread = 0.15\n"
           "seed = 11\n";
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    out << text;
    if (!out.good()) throw std::runtime_error("cannot write " + p.string());
}

// every test calls this first; idempotent
void ensure_scratch() {
    fs::create_directories(kScratch);
    write_file(kScratch / "base.cfg", base_config());
}

}  // namespace

TEST_CASE("train writes checkpoint, log and effective config") {
    ensure_scratch();
    const auto res = run_cli("train --config " + (kScratch / "base.cfg").string() + " --out " +
                             (kScratch / "run1").string());
    CAPTURE(res.output);
    REQUIRE(res.exit_code == 0);
    CHECK(fs::exists(kScratch / "run1.ckpt"));
    CHECK(fs::exists(kScratch / "run1.log.csv"));
    CHECK(fs::exists(kScratch / "run1.cfg"));

    const std::string log = slurp(kScratch / "run1.log.csv");
    CHECK(log.rfind("iteration,lr,loss,violation_count,hard_count", 0) == 0);

    // checkpoint parses back with the configured shape
    const adml::Checkpoint ck = adml::load_checkpoint((kScratch / "run1.ckpt").string());
    CHECK(ck.net.spec.input_dim == 8);
    CHECK(ck.net.spec.feature_dim == 6);
    CHECK(ck.head.class_count() == 4);
}

TEST_CASE("train is reproducible and honors --set overrides") {
    ensure_scratch();
    const std::string cfg = (kScratch / "base.cfg").string();
    const auto a = run_cli("train --config " + cfg + " --set sgd.max_iter=40 --out " +
                           (kScratch / "rep_a").string());
    const auto b = run_cli("train --config " + cfg + " --set sgd.max_iter=40 --out " +
                           (kScratch / "rep_b").string());
    REQUIRE(a.exit_code == 0);
    REQUIRE(b.exit_code == 0);
    CHECK(slurp(kScratch / "rep_a.ckpt") == slurp(kScratch / "rep_b.ckpt"));
    CHECK(slurp(kScratch / "rep_a.log.csv") == slurp(kScratch / "rep_b.log.csv"));

    // a different seed must change the artifacts
    const auto c = run_cli("train --config " + cfg + " --set sgd.max_iter=40 --seed 99 --out " +
                           (kScratch / "rep_c").string());
    REQUIRE(c.exit_code == 0);
    CHECK(slurp(kScratch / "rep_a.ckpt") != slurp(kScratch / "rep_c.ckpt"));
}

TEST_CASE("rerunning from the dumped effective config reproduces the run") {
    ensure_scratch();
    const auto a = run_cli("train --config " + (kScratch / "base.cfg").string() + " --out " +
                           (kScratch / "eff_a").string());
    REQUIRE(a.exit_code == 0);
    const auto b = run_cli("train --config " + (kScratch / "eff_a.cfg").string() + " --out " +
                           (kScratch / "eff_b").string());
    REQUIRE(b.exit_code == 0);
    CHECK(slurp(kScratch / "eff_a.ckpt") == slurp(kScratch / "eff_b.ckpt"));
    CHECK(slurp(kScratch / "eff_a.log.csv") == slurp(kScratch / "eff_b.log.csv"));
}

TEST_CASE("train rejects bad config values with exit code 1") {
    ensure_scratch();
    const auto res = run_cli("train --config " + (kScratch / "base.cfg").string() +
                             " --set loss.alpha=7 --out " + (kScratch / "bad").string());
    CHECK(res.exit_code == 1);
    CHECK(res.output.find("loss.alpha") != std::string::npos);

    const auto missing = run_cli("train --config " + (kScratch / "nonexistent.cfg").string() +
                                 " --out " + (kScratch / "bad2").string());
    CHECK(missing.exit_code == 1);

    const auto unknown = run_cli("train --config " + (kScratch / "base.cfg").string() +
                                 " --set data.nope=1 --out " + (kScratch / "bad3").string());
    CHECK(unknown.exit_code == 1);
    CHECK(unknown.output.find("data.nope") != std::string::npos);
}

TEST_CASE("eval verify protocol writes report and roc csv") {
    ensure_scratch();
    REQUIRE(run_cli("train --config " + (kScratch / "base.cfg").string() + " --out " +
                    (kScratch / "ev").string())
                .exit_code == 0);

    // balanced pairs over the blob dataset (4 classes x 24 samples,
    // class-major rows): 40 same + 40 diff = 80 pairs, 10 folds of 8
    std::ostringstream pairs;
    for (int i = 0; i < 40; ++i) {
        const int cls = i % 4;
        pairs << (cls * 24 + (i % 12)) << ' ' << (cls * 24 + 12 + (i % 12)) << " 1\n";
    }
    for (int i = 0; i < 40; ++i) {
        const int cls_a = i % 4, cls_b = (i + 1) % 4;
        pairs << (cls_a * 24 + (i % 24)) << ' ' << (cls_b * 24 + ((i + 7) % 24)) << " 0\n";
    }
    write_file(kScratch / "pairs.txt", pairs.str());

    const auto res = run_cli("eval --checkpoint " + (kScratch / "ev.ckpt").string() +
                             " --config " + (kScratch / "base.cfg").string() +
                             " --protocol verify --set eval.pairs=" +
                             (kScratch / "pairs.txt").string() + " --out " +
                             (kScratch / "ev_verify").string());
    CAPTURE(res.output);
    REQUIRE(res.exit_code == 0);
    const std::string report = slurp(kScratch / "ev_verify.report.txt");
    CHECK(report.find("protocol: verify") != std::string::npos);
    CHECK(report.find("mean_accuracy:") != std::string::npos);
    CHECK(report.find("tar_at_far_0.01:") != std::string::npos);
    const std::string roc = slurp(kScratch / "ev_verify.roc.csv");
    CHECK(roc.rfind("threshold,far,tar", 0) == 0);

    // determinism of the whole eval path
    const auto res2 = run_cli("eval --checkpoint " + (kScratch / "ev.ckpt").string() +
                              " --config " + (kScratch / "base.cfg").string() +
                              " --protocol verify --set eval.pairs=" +
                              (kScratch / "pairs.txt").string() + " --out " +
                              (kScratch / "ev_verify2").string());
    REQUIRE(res2.exit_code == 0);
    CHECK(slurp(kScratch / "ev_verify.report.txt") == slurp(kScratch / "ev_verify2.report.txt"));
    CHECK(slurp(kScratch / "ev_verify.roc.csv") == slurp(kScratch / "ev_verify2.roc.csv"));
}

TEST_CASE("eval identify protocol writes a cmc csv") {
    ensure_scratch();
    REQUIRE(fs::exists(kScratch / "ev.ckpt"));
    const auto res = run_cli("eval --checkpoint " + (kScratch / "ev.ckpt").string() +
                             " --config " + (kScratch / "base.cfg").string() +
                             " --protocol identify --out " + (kScratch / "ev_id").string());
    CAPTURE(res.output);
    REQUIRE(res.exit_code == 0);
    const std::string report = slurp(kScratch / "ev_id.report.txt");
    CHECK(report.find("cmc_rank_1:") != std::string::npos);
    const std::string cmc = slurp(kScratch / "ev_id.cmc.csv");
    CHECK(cmc.rfind("rank,rate", 0) == 0);
}

TEST_CASE("eval video and template protocols score template pairs") {
    ensure_scratch();
    REQUIRE(fs::exists(kScratch / "ev.ckpt"));
    // 8 templates (2 per class), 3 frames each; 10 same + 10 diff pairs over
    // template ids -> 20 scores, 10 folds of 2
    std::ostringstream templates;
    int tid = 0;
    for (int cls = 0; cls < 4; ++cls)
        for (int half = 0; half < 2; ++half, ++tid)
            templates << tid << ' ' << cls << ' ' << (cls * 24 + half * 12) << ','
                      << (cls * 24 + half * 12 + 1) << ',' << (cls * 24 + half * 12 + 2)
                      << '\n';
    write_file(kScratch / "templates.txt", templates.str());

    std::ostringstream tpairs;
    for (int i = 0; i < 10; ++i) {
        const int cls = i % 4;
        tpairs << (2 * cls) << ' ' << (2 * cls + 1) << " 1\n";
    }
    for (int i = 0; i < 10; ++i) {
        const int cls_a = i % 4, cls_b = (i + 1) % 4;
        tpairs << (2 * cls_a) << ' ' << (2 * cls_b + 1) << " 0\n";
    }
    write_file(kScratch / "template_pairs.txt", tpairs.str());

    for (const std::string protocol : {"video", "template"}) {
        const auto res = run_cli(
            "eval --checkpoint " + (kScratch / "ev.ckpt").string() + " --config " +
            (kScratch / "base.cfg").string() + " --protocol " + protocol +
            " --set eval.templates=" + (kScratch / "templates.txt").string() +
            " --set eval.pairs=" + (kScratch / "template_pairs.txt").string() +
            " --set eval.folds=10 --out " + (kScratch / ("ev_" + protocol)).string());
        CAPTURE(protocol);
        CAPTURE(res.output);
        REQUIRE(res.exit_code == 0);
        CHECK(slurp(kScratch / ("ev_" + protocol + ".report.txt")).find("mean_accuracy:") !=
              std::string::npos);
    }
}

TEST_CASE("export-features writes a parseable csv, and binary round-trips") {
    ensure_scratch();
    REQUIRE(fs::exists(kScratch / "ev.ckpt"));
    const auto res = run_cli("export-features --checkpoint " + (kScratch / "ev.ckpt").string() +
                             " --config " + (kScratch / "base.cfg").string() + " --out " +
                             (kScratch / "features.csv").string());
    CAPTURE(res.output);
    REQUIRE(res.exit_code == 0);
    const adml::FeatureFile f = adml::read_features_csv((kScratch / "features.csv").string());
    CHECK(f.features.rows == 4 * 24);
    CHECK(f.features.cols == 6);
    CHECK(f.labels.size() == 96);

    // re-export is byte-identical
    const std::string first = slurp(kScratch / "features.csv");
    REQUIRE(run_cli("export-features --checkpoint " + (kScratch / "ev.ckpt").string() +
                    " --config " + (kScratch / "base.cfg").string() + " --out " +
                    (kScratch / "features.csv").string())
                .exit_code == 0);
    CHECK(slurp(kScratch / "features.csv") == first);

    REQUIRE(run_cli("export-features --checkpoint " + (kScratch / "ev.ckpt").string() +
                    " --config " + (kScratch / "base.cfg").string() + " --binary --out " +
                    (kScratch / "features.bin").string())
                .exit_code == 0);
    const adml::FeatureFile bin = adml::read_features_binary((kScratch / "features.bin").string());
    CHECK(bin.features.values == f.features.values);
    CHECK(bin.labels == f.labels);
}

TEST_CASE("margins-trace converts adaptive logs and rejects plain ones") {
    ensure_scratch();
    const std::string cfg = (kScratch / "base.cfg").string();
    REQUIRE(run_cli("train --config " + cfg +
                    " --set loss.variant=malmc --set loss.lambda=0.1 --set sgd.max_iter=30"
                    " --out " +
                    (kScratch / "malmc").string())
                .exit_code == 0);
    const auto res = run_cli("margins-trace --log " + (kScratch / "malmc.log.csv").string() +
                             " --out " + (kScratch / "margins.csv").string());
    CAPTURE(res.output);
    REQUIRE(res.exit_code == 0);
    const std::string trace = slurp(kScratch / "margins.csv");
    CHECK(trace.rfind("iteration,class,margin", 0) == 0);
    // 30 iterations x 4 classes + header
    int lines = 0;
    for (char c : trace) lines += (c == '\n') ? 1 : 0;
    CHECK(lines == 1 + 30 * 4);

    // margins stay within [alpha0, 1]
    std::istringstream in(trace);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        const std::size_t comma = line.rfind(',');
        const double margin = std::stod(line.substr(comma + 1));
        CHECK(margin >= 0.2);
        CHECK(margin <= 1.0);
    }

    const auto plain = run_cli("margins-trace --log " + (kScratch / "ev.log.csv").string() +
                               " --out " + (kScratch / "margins_plain.csv").string());
    CHECK(plain.exit_code == 1);
}

TEST_CASE("gradcheck passes per variant and fails when corrupted") {
    ensure_scratch();
    const auto softmax = run_cli("gradcheck --variant softmax --trials 5 --seed 3");
    CAPTURE(softmax.output);
    CHECK(softmax.exit_code == 0);
    CHECK(softmax.output.find("softmax") != std::string::npos);
    CHECK(softmax.output.find("ok") != std::string::npos);

    const auto dlmc = run_cli("gradcheck --variant dlmc --trials 5 --seed 3");
    CHECK(dlmc.exit_code == 0);

    const auto corrupt = run_cli("gradcheck --variant lmc --trials 3 --seed 3 --corrupt");
    CHECK(corrupt.exit_code == 2);
    CHECK(corrupt.output.find("FAIL") != std::string::npos);

    const auto bad = run_cli("gradcheck --variant nonsense --trials 3");
    CHECK(bad.exit_code == 1);
}

TEST_CASE("usage errors exit with code 1") {
    ensure_scratch();
    CHECK(run_cli("eval --config whatever.cfg").exit_code == 1);  // missing --checkpoint
    CHECK(run_cli("definitely-not-a-command").exit_code == 1);
}

TEST_CASE("missing dataset path fails naming the key") {
    ensure_scratch();
    const auto res = run_cli("train --config " + (kScratch / "base.cfg").string() +
                             " --set data.kind=idx --out " + (kScratch / "noidx").string());
    CHECK(res.exit_code == 1);
    CHECK(res.output.find("data.images") != std::string::npos);
}

TEST_CASE("export-features with --dim reduces through pca") {
    ensure_scratch();
    REQUIRE(run_cli("train --config " + (kScratch / "base.cfg").string() +
                    " --set sgd.max_iter=30 --out " + (kScratch / "dim_run").string())
                .exit_code == 0);
    REQUIRE(run_cli("export-features --checkpoint " + (kScratch / "dim_run.ckpt").string() +
                    " --config " + (kScratch / "base.cfg").string() + " --dim 2 --out " +
                    (kScratch / "dim2.csv").string())
                .exit_code == 0);
    const adml::FeatureFile f = adml::read_features_csv((kScratch / "dim2.csv").string());
    CHECK(f.features.cols == 2);
    CHECK(f.features.rows == 96);
}

namespace {

void push_be32(std::string& v, std::uint32_t x) {
    v.push_back(static_cast<char>((x >> 24) & 0xFF));
    v.push_back(static_cast<char>((x >> 16) & 0xFF));
    v.push_back(static_cast<char>((x >> 8) & 0xFF));
    v.push_back(static_cast<char>(x & 0xFF));
}

// Synthetic image classification set in IDX format. Each class is a pair of
// mirrored bright blobs at a class-specific grid position, so the patterns
// are horizontally symmetric and flip augmentation stays label-consistent.
void write_synthetic_idx(const fs::path& images, const fs::path& labels, int per_class,
                         std::uint64_t seed) {
    const int classes = 10, side = 8;
    adml::Rng rng(seed);
    std::string ibytes, lbytes;
    push_be32(ibytes, 0x00000803u);
    push_be32(ibytes, static_cast<std::uint32_t>(classes * per_class));
    push_be32(ibytes, side);
    push_be32(ibytes, side);
    push_be32(lbytes, 0x00000801u);
    push_be32(lbytes, static_cast<std::uint32_t>(classes * per_class));

    for (int c = 0; c < classes; ++c) {
        const double cy = 1.2 + 2.2 * (c / 4);
        const double cx = 0.6 + 1.0 * (c % 4);
        for (int s = 0; s < per_class; ++s) {
            const double jy = cy + 0.15 * rng.normal();
            const double jx = cx + 0.15 * rng.normal();
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) {
                    const double d2a = (y - jy) * (y - jy) + (x - jx) * (x - jx);
                    const double d2b = (y - jy) * (y - jy) + (x - (side - 1 - jx)) * (x - (side - 1 - jx));
                    const double v = 255.0 * (std::exp(-d2a / 1.5) + std::exp(-d2b / 1.5)) +
                                     10.0 * rng.uniform();
                    ibytes.push_back(static_cast<char>(
                        static_cast<unsigned char>(std::min(255.0, std::max(0.0, v)))));
                }
            lbytes.push_back(static_cast<char>(c));
        }
    }
    write_file(images, ibytes);
    write_file(labels, lbytes);
}

}  // namespace

TEST_CASE("idx image pipeline: train, identify and flip-merge export end to end") {
    ensure_scratch();
    write_synthetic_idx(kScratch / "imgs.idx", kScratch / "labs.idx", 40, 2024);

    write_file(kScratch / "idx.cfg",
               "loss.variant = lmc\n"
               "loss.lambda = 0.1\n"
               "loss.alpha = 0.5\n"
               "net.input_dim = 64\n"
               "net.hidden_dims = 32\n"
               "net.feature_dim = 16\n"
               "sgd.base_lr = 0.1\n"
               "sgd.lr_drops = 300:10\n"
               "sgd.max_iter = 400\n"
               "sgd.batch_size = 64\n"
               "data.kind = idx\n"
               "data.images = " + (kScratch / "imgs.idx").string() + "\n" +
               "data.labels = " + (kScratch / "labs.idx").string() + "\n" +
               "data.augment_flip = true\n"
               "seed = 5\n");

    const auto train = run_cli("train --config " + (kScratch / "idx.cfg").string() + " --out " +
                               (kScratch / "idx_run").string());
    CAPTURE(train.output);
    REQUIRE(train.exit_code == 0);

    const auto eval = run_cli("eval --checkpoint " + (kScratch / "idx_run.ckpt").string() +
                              " --config " + (kScratch / "idx.cfg").string() +
                              " --protocol identify --out " + (kScratch / "idx_id").string());
    CAPTURE(eval.output);
    REQUIRE(eval.exit_code == 0);
    const std::string report = slurp(kScratch / "idx_id.report.txt");
    // an easy synthetic set must identify essentially perfectly at rank 1
    const std::size_t pos = report.find("cmc_rank_1: ");
    REQUIRE(pos != std::string::npos);
    CHECK(std::stod(report.substr(pos + 12)) >= 0.95);

    const auto exp = run_cli("export-features --checkpoint " +
                             (kScratch / "idx_run.ckpt").string() + " --config " +
                             (kScratch / "idx.cfg").string() + " --out " +
                             (kScratch / "idx_features.csv").string());
    REQUIRE(exp.exit_code == 0);
    const adml::FeatureFile f = adml::read_features_csv((kScratch / "idx_features.csv").string());
    CHECK(f.features.rows == 400);
    CHECK(f.features.cols == 16);
}
