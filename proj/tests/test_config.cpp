#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "adml/config.hpp"
#include "adml/features_io.hpp"
#include "support/test_util.hpp"

using adml::RunConfig;

TEST_CASE("config parsing handles comments, spacing and every section") {
    std::istringstream in(
        "# training setup\n"
        "seed = 9\n"
        "loss.variant = nlmc_malmc\n"
        "loss.lambda = 0.001   # fine-tuned weighting\n"
        "loss.alpha = 0.5\n"
        "net.hidden_dims = 64, 32\n"
        "net.activation = prelu\n"
        "sgd.lr_drops = 100:10, 200:2\n"
        "sgd.max_iter = 400\n"
        "data.kind = blobs\n"
        "eval.far_levels = 0.1,0.01\n");
    const RunConfig cfg = adml::parse_config_text(in, "test");
    CHECK(cfg.seed == 9);
    CHECK(cfg.loss.variant == adml::LossVariant::NLMC_MALMC);
    CHECK(cfg.loss.lambda == doctest::Approx(0.001));
    CHECK(cfg.net.hidden_dims == std::vector<int>{64, 32});
    CHECK(cfg.net.activation == adml::Activation::Prelu);
    REQUIRE(cfg.sgd.lr_drops.size() == 2);
    CHECK(cfg.sgd.lr_drops[0].first == 100);
    CHECK(cfg.sgd.lr_drops[1].second == doctest::Approx(2.0));
    CHECK(cfg.sgd.max_iter == 400);
    CHECK(cfg.far_levels == std::vector<double>{0.1, 0.01});
}

TEST_CASE("unknown keys are rejected by name") {
    std::istringstream in("loss.gamma = 3\n");
    CHECK_THROWS_WITH_AS((void)adml::parse_config_text(in, "test"),
                         doctest::Contains("loss.gamma"), std::invalid_argument);

    RunConfig cfg;
    CHECK_THROWS_WITH_AS(adml::apply_override(cfg, "nope.key=1"), doctest::Contains("nope.key"),
                         std::invalid_argument);
    CHECK_THROWS_AS(adml::apply_override(cfg, "missing-equals"), std::invalid_argument);
}

TEST_CASE("value validation names the offending key") {
    std::istringstream in("loss.lambda = banana\n");
    CHECK_THROWS_WITH_AS((void)adml::parse_config_text(in, "test"),
                         doctest::Contains("loss.lambda"), std::invalid_argument);

    RunConfig cfg;
    adml::apply_override(cfg, "loss.alpha=2.0");
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("loss.alpha"),
                         std::invalid_argument);
}

TEST_CASE("overrides take precedence over file values") {
    std::istringstream in("loss.lambda = 0.1\n");
    RunConfig cfg = adml::parse_config_text(in, "test");
    adml::apply_override(cfg, "loss.lambda=0.25");
    CHECK(cfg.loss.lambda == doctest::Approx(0.25));
}

TEST_CASE("dump_config round-trips every field") {
    RunConfig cfg;
    cfg.seed = 1234;
    cfg.loss.variant = adml::LossVariant::DLMC;
    cfg.loss.lambda = 0.03;
    cfg.loss.alpha = 0.01;
    cfg.loss.p = 0.6;
    cfg.net.hidden_dims = {48, 24};
    cfg.net.activation = adml::Activation::Prelu;
    cfg.net.init_seed = 77;
    cfg.sgd.base_lr = 0.001;
    cfg.sgd.lr_drops = {{1000, 10.0}};
    cfg.sgd.max_iter = 4000;
    cfg.warm_start = "base.ckpt";
    cfg.data_kind = "blobs";
    cfg.blob_spread = 0.123456789012345;
    cfg.protocol = "template";
    cfg.templates_path = "templates.txt";
    cfg.beta = 12.5;
    cfg.far_levels = {0.02, 0.005};

    const std::string text = adml::dump_config(cfg);
    std::istringstream in(text);
    const RunConfig back = adml::parse_config_text(in, "dump");
    CHECK(adml::dump_config(back) == text);  // fixed point
    CHECK(back.seed == cfg.seed);
    CHECK(back.loss.variant == cfg.loss.variant);
    CHECK(back.loss.lambda == cfg.loss.lambda);
    CHECK(back.net.hidden_dims == cfg.net.hidden_dims);
    CHECK(back.sgd.lr_drops == cfg.sgd.lr_drops);
    CHECK(back.warm_start == cfg.warm_start);
    CHECK(back.blob_spread == cfg.blob_spread);
    CHECK(back.protocol == cfg.protocol);
    CHECK(back.beta == cfg.beta);
    CHECK(back.far_levels == cfg.far_levels);
}

TEST_CASE("network spec falls back to the run seed") {
    RunConfig cfg;
    cfg.seed = 555;
    cfg.net.init_seed = 0;
    CHECK(cfg.network_spec().init_seed == 555);
    cfg.net.init_seed = 3;
    CHECK(cfg.network_spec().init_seed == 3);
}

TEST_CASE("format_double prints reproducible shortest forms") {
    CHECK(adml::format_double(0.5) == "0.5");
    CHECK(adml::format_double(1.0) == "1");
    const double v = 0.1234567890123456789;
    CHECK(std::stod(adml::format_double(v)) == v);  // lossless round trip
}

TEST_CASE("shipped default configs encode the published settings") {
    const std::string dir = ADML_CONFIGS_DIR;
    const auto load = [&](const char* name) {
        RunConfig cfg = adml::parse_config_file(dir + "/" + name);
        cfg.validate();
        return cfg;
    };

    const RunConfig lmc = load("lmc.cfg");
    CHECK(lmc.loss.variant == adml::LossVariant::LMC);
    CHECK(lmc.loss.lambda == 0.1);
    CHECK(lmc.loss.alpha == 0.5);
    CHECK(lmc.sgd.base_lr == 0.1);
    CHECK(lmc.sgd.lr_drops ==
          std::vector<std::pair<long, double>>{{16000, 10.0}, {24000, 10.0}});
    CHECK(lmc.sgd.max_iter == 28000);
    CHECK(lmc.sgd.batch_size == 256);
    CHECK(lmc.sgd.momentum == 0.9);
    CHECK(lmc.sgd.weight_decay == 0.0005);

    const RunConfig hlmc = load("hlmc.cfg");
    CHECK(hlmc.loss.variant == adml::LossVariant::HLMC);
    CHECK(hlmc.loss.lambda == 0.005);
    CHECK(hlmc.loss.alpha == 0.5);

    const RunConfig malmc = load("malmc.cfg");
    CHECK(malmc.loss.variant == adml::LossVariant::MALMC);
    CHECK(malmc.loss.lambda == 0.1);
    CHECK(malmc.loss.alpha0 == 0.2);
    CHECK(malmc.loss.p == 0.6);

    const RunConfig nlmc = load("nlmc.cfg");
    CHECK(nlmc.loss.variant == adml::LossVariant::NLMC);
    CHECK(nlmc.loss.lambda == 0.001);
    CHECK(nlmc.sgd.base_lr == 0.001);  // fine-tuning rate

    const RunConfig nm = load("nlmc_malmc.cfg");
    CHECK(nm.loss.variant == adml::LossVariant::NLMC_MALMC);

    const RunConfig dlmc = load("dlmc.cfg");
    CHECK(dlmc.loss.variant == adml::LossVariant::DLMC);
    CHECK(dlmc.loss.lambda == 0.03);
    CHECK(dlmc.loss.alpha == 0.01);
    CHECK(dlmc.sgd.base_lr == 0.001);

    const RunConfig softmax = load("softmax.cfg");
    CHECK(softmax.loss.variant == adml::LossVariant::Softmax);
}

TEST_CASE("feature csv and binary handle the empty feature set") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "adml_config_tests";
    fs::create_directories(dir);

    const adml::Matrix empty(0, 5);
    const std::vector<int> no_labels;
    adml::write_features_csv((dir / "empty.csv").string(), empty, no_labels);
    std::ifstream in(dir / "empty.csv");
    std::string header, extra;
    REQUIRE(std::getline(in, header));
    CHECK(header == "id,label,f0,f1,f2,f3,f4");
    CHECK(!std::getline(in, extra));  // header-only

    const adml::FeatureFile back = adml::read_features_csv((dir / "empty.csv").string());
    CHECK(back.features.rows == 0);
    CHECK(back.features.cols == 5);

    adml::write_features_binary((dir / "empty.bin").string(), empty, no_labels);
    const adml::FeatureFile bin = adml::read_features_binary((dir / "empty.bin").string());
    CHECK(bin.features.rows == 0);
    CHECK(bin.features.cols == 5);
    CHECK(bin.labels.empty());
}
