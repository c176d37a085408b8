#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cmlp/checkpoint.hpp"
#include "cmlp/experiment.hpp"
#include "cmlp/probes.hpp"

using namespace cmlp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "cmlp_test_cli" / name;
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig small_config(const std::string& name) {
    ExperimentConfig c;
    c.name = name;
    c.width = 12;
    c.height = 10;
    c.encoding = {EncodingKind::positional, 3, 1.0};
    c.hidden = {16, 16};
    c.epochs = 6;
    c.batch_size = 32;
    c.snapshots = {0, 2, 6};
    c.probe.neighborhoods = 10;
    c.probe.pairs = 200;
    c.probe.min_sep = 3;
    c.probe.slice_resolution = 16;
    c.probe.distance_subsample = 40;
    return c;
}

std::vector<ProbeRecord> rows_named(const std::vector<ProbeRecord>& all, const std::string& metric) {
    std::vector<ProbeRecord> out;
    for (const auto& r : all) {
        if (r.metric == metric) out.push_back(r);
    }
    return out;
}

}  // namespace

TEST_CASE("config text round trip") {
    ExperimentConfig c = small_config("rt");
    c.interval = {-1.0, 1.0};
    c.adam.lr = 0.1 + 0.2;  // not exactly representable in short decimal
    c.signal_seed = 99;
    c.probes.slice = true;
    const std::string text = to_config_text(c);
    const ExperimentConfig back = parse_config(text);
    CHECK(to_config_text(back) == text);
    CHECK(back.adam.lr == c.adam.lr);
    CHECK(back.interval.lo == -1.0);
    CHECK(back.hidden == std::vector<int>{16, 16});
    CHECK(back.signal_seed == std::optional<std::uint64_t>(99));
    CHECK(back.probes.slice);
    CHECK(back.encoding.kind == EncodingKind::positional);
}

TEST_CASE("config parsing details and errors") {
    const auto c = parse_config("# comment\n\n  name = abc   # trailing\nencoding.kind=positional\nencoding.max_level = 8\r\n"
                                "arch.hidden = 64, 32\nprobe.slice = on\n");
    CHECK(c.name == "abc");
    CHECK(c.encoding.max_level == 8);
    CHECK(c.hidden == std::vector<int>{64, 32});
    CHECK(c.probes.slice);
    CHECK(c.epochs == 500);

    auto message = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const std::invalid_argument& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message("name = a\nbogus.key = 1\n").find("line 2") != std::string::npos);
    CHECK(message("bogus.key = 1\n").find("unknown key") != std::string::npos);
    CHECK(message("train.epochs = ten\n").find("train.epochs") != std::string::npos);
    CHECK(message("name\n").find("key = value") != std::string::npos);
    CHECK(message("probe.census = maybe\n").find("boolean") != std::string::npos);
    CHECK(message("encoding.kind = fourier\n") != "");
}

TEST_CASE("config validation") {
    CHECK_NOTHROW(ExperimentConfig{}.validate());
    auto fails = [](auto mutate) {
        ExperimentConfig c;
        mutate(c);
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    };
    fails([](ExperimentConfig& c) { c.width = 0; });
    fails([](ExperimentConfig& c) { c.interval = {1.0, 1.0}; });
    fails([](ExperimentConfig& c) { c.encoding.max_level = -1; });
    fails([](ExperimentConfig& c) { c.hidden.clear(); });
    fails([](ExperimentConfig& c) { c.hidden = {8, 0}; });
    fails([](ExperimentConfig& c) { c.adam.lr = 0.0; });
    fails([](ExperimentConfig& c) { c.adam.beta2 = 1.0; });
    fails([](ExperimentConfig& c) { c.batch_size = 5000; });
    fails([](ExperimentConfig& c) { c.epochs = -1; });
    fails([](ExperimentConfig& c) { c.snapshots = {-3}; });
    fails([](ExperimentConfig& c) { c.probe.neighborhood_size = 2; });
    fails([](ExperimentConfig& c) { c.probe.neighborhoods = 4000; });
    fails([](ExperimentConfig& c) { c.probe.min_sep = 64; });
    fails([](ExperimentConfig& c) { c.probes.slice = true; });  // identity input
    fails([](ExperimentConfig& c) { c.name = "a/b"; });
    ExperimentConfig ok;
    ok.probes.hamming = ok.probes.confusion = false;
    ok.probe.neighborhoods = 4000;
    CHECK_NOTHROW(ok.validate());
}

TEST_CASE("seed splitting and snapshot schedule") {
    ExperimentConfig c;
    const auto s = derive_run_seeds(c);
    const std::set<std::uint64_t> distinct{s.init, s.shuffle, s.neighborhoods, s.pairs, s.distance, s.power_iteration};
    CHECK(distinct.size() == 6);
    CHECK(s.init == derive_seed(7, "init"));
    c.seed = 8;
    CHECK(derive_run_seeds(c).init != s.init);
    c.signal_seed = 7;
    CHECK(derive_run_seeds(c).signal == 7);

    ExperimentConfig e;
    e.epochs = 500;
    CHECK(effective_snapshots(e) == std::vector<int>{1, 10, 100, 500});
    e.epochs = 5000;
    CHECK(effective_snapshots(e) == std::vector<int>{1, 10, 100, 1000, 5000});
    e.epochs = 0;
    CHECK(effective_snapshots(e) == std::vector<int>{0});
}

TEST_CASE("metrics csv dialect") {
    const std::vector<ProbeRecord> rows{{1, "train_loss", -1, "scalar", format_double(0.25)},
                                        {1, "spectral_norm", 2, "scalar", "3.5"},
                                        {1, "hamming_local", -1, "scalar", "NA"},
                                        {1, "confusion_local_hist", -1, "histogram", "1;2;3"}};
    const std::string csv = metrics_csv(rows);
    CHECK(csv.rfind("epoch,metric,layer,kind,value\n", 0) == 0);
    CHECK(csv.find('\r') == std::string::npos);
    CHECK(csv.find("1,train_loss,,scalar,0.25\n") != std::string::npos);
    CHECK(csv.find("1,spectral_norm,2,scalar,3.5\n") != std::string::npos);
    const auto back = parse_metrics_csv(csv);
    REQUIRE(back.size() == 4);
    CHECK(back[1].layer == 2);
    CHECK(back[0].layer == -1);
    CHECK(back[2].value == "NA");
    CHECK(metrics_csv(back) == csv);
    CHECK_THROWS(parse_metrics_csv("a,b\n"));
    CHECK(format_double(0.1) == "0.1");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
    for (const auto& r : rows) CHECK(is_registered_metric(r.metric));
    CHECK_FALSE(is_registered_metric("bogus"));
}

TEST_CASE("recipes") {
    CHECK(recipe_names().size() == 9);
    for (const auto& name : recipe_names()) {
        const auto configs = recipe(name);
        CHECK_FALSE(configs.empty());
        std::set<std::string> names;
        for (const auto& c : configs) {
            CHECK_NOTHROW(c.validate());
            ExperimentConfig full = c;
            full.epochs = full.full_epochs;
            CHECK_NOTHROW(full.validate());
            CHECK(c.width == 64);
            CHECK(c.height == 64);
            CHECK(c.hidden == std::vector<int>{128, 128});
            CHECK(c.adam.lr == 1e-3);
            CHECK(c.batch_size == 256);
            names.insert(c.name);
        }
        CHECK(names.size() == configs.size());
    }
    CHECK_THROWS_AS(recipe("fig11"), std::invalid_argument);

    for (const auto& c : recipe("fig7")) {
        CHECK(std::count(c.snapshots.begin(), c.snapshots.end(), 1) == 1);
        CHECK(std::count(c.snapshots.begin(), c.snapshots.end(), 5000) == 1);
        CHECK(c.probes.hyperplane_similarity);
    }
    for (const auto& c : recipe("fig5")) {
        CHECK(c.probe.neighborhoods == 100);
        CHECK(c.probe.pairs == 10000);
        CHECK(c.probes.confusion);
    }
    for (const auto& c : recipe("fig2")) {
        CHECK(c.epochs == 0);
        CHECK(effective_snapshots(c) == std::vector<int>{0});
        const auto& p = c.probes;
        CHECK(p.census);
        CHECK(p.hyperplane_render);
        const bool others = p.hamming || p.confusion || p.hyperplane_similarity || p.boundary || p.spectral ||
                            p.dead || p.slice || p.distance_matrix || p.reconstruction;
        CHECK_FALSE(others);
    }
    std::set<int> levels;
    for (const auto& name : recipe_names()) {
        for (const auto& c : recipe(name)) levels.insert(c.encoding.kind == EncodingKind::identity ? -1 : c.encoding.max_level);
    }
    CHECK(levels == std::set<int>{-1, 5, 8, 16});

    std::set<double> scales;
    bool symmetric = false, encoded = false;
    for (const auto& c : recipe("fig10")) {
        CHECK(c.probes.dead);
        CHECK(c.probes.spectral);
        if (c.encoding.kind != EncodingKind::identity) {
            encoded = c.encoding.max_level == 8;
        } else if (c.interval.lo < 0) {
            symmetric = c.interval.lo == -1.0 && c.interval.hi == 1.0;
        } else {
            scales.insert(c.interval.hi);
        }
    }
    CHECK(scales == std::set<double>{1, 2, 4, 8, 16});
    CHECK(symmetric);
    CHECK(encoded);
}

TEST_CASE("run at epoch zero fires every probe once on the initial net") {
    ExperimentConfig c = small_config("e0");
    c.epochs = 0;
    c.probes.slice = c.probes.hyperplane_render = c.probes.distance_matrix = true;
    const auto dir = scratch("e0");
    const auto m = run(c, {false, dir, false});
    CHECK(m.snapshots == std::vector<int>{0});
    CHECK(m.loss_curve.empty());
    const auto rows = parse_metrics_csv(slurp(dir / "metrics.csv"));
    std::set<std::string> metrics;
    for (const auto& r : rows) {
        CHECK(r.epoch == 0);
        CHECK(is_registered_metric(r.metric));
        metrics.insert(r.metric);
    }
    for (const char* name : {"dataset_loss", "psnr", "region_count", "hamming_local", "hamming_global",
                             "confusion_local_eta", "confusion_global_hist", "hyperplane_similarity",
                             "boundary_distance", "spectral_norm_product", "dead_relu", "slice_low", "slice_high_labels",
                             "hyperplane_bitmap", "distance_matrix", "hanin_log_bound"}) {
        CHECK_MESSAGE(metrics.count(name) == 1, name);
    }
    CHECK(rows_named(rows, "region_count").size() == 1);
    CHECK(rows_named(rows, "train_loss").empty());
    CHECK(fs::exists(dir / "recon_e0.ppm"));
    CHECK(fs::exists(dir / "target.ppm"));
    REQUIRE(m.checkpoints.size() == 1);

    // checkpoint holds exactly the initial network
    const auto cp = load_checkpoint(dir / m.checkpoints[0].path);
    const auto seeds = derive_run_seeds(c);
    CHECK(flatten(cp.params) == flatten(init_mlp(cp.meta.sizes, seeds.init)));
    CHECK(cp.meta.sizes == std::vector<int>{16, 16, 16, 3});
}

TEST_CASE("identical runs write identical bytes; probe streams do not touch training") {
    const auto c = small_config("det");
    const auto a = scratch("det_a"), b = scratch("det_b");
    run(c, {false, a, false});
    run(c, {false, b, false});
    CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
    CHECK(slurp(a / "checkpoints/params_e6.bin") == slurp(b / "checkpoints/params_e6.bin"));
    CHECK(slurp(a / "recon_e6.ppm") == slurp(b / "recon_e6.ppm"));

    ExperimentConfig more = c;
    more.probe.pairs = 350;
    const auto d = scratch("det_pairs");
    const auto m = run(more, {false, d, false});
    const auto base = parse_metrics_csv(slurp(a / "metrics.csv"));
    const auto changed = parse_metrics_csv(slurp(d / "metrics.csv"));
    const auto la = rows_named(base, "train_loss"), lb = rows_named(changed, "train_loss");
    REQUIRE(la.size() == 6);
    for (std::size_t i = 0; i < la.size(); ++i) CHECK(la[i].value == lb[i].value);
    for (const auto& cp : m.checkpoints) CHECK(slurp(a / cp.path) == slurp(d / cp.path));
    CHECK(rows_named(changed, "confusion_global_pairs")[0].value == "350");
}

TEST_CASE("rows are ordered by epoch with the training loss first") {
    const auto dir = scratch("order");
    run(small_config("order"), {false, dir, false});
    const auto rows = parse_metrics_csv(slurp(dir / "metrics.csv"));
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1].epoch <= rows[i].epoch);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].epoch >= 1 && (i == 0 || rows[i - 1].epoch != rows[i].epoch)) CHECK(rows[i].metric == "train_loss");
    }
}

TEST_CASE("manifest reconstructs the run") {
    const auto c = small_config("man");
    const auto dir = scratch("man");
    const auto m = run(c, {false, dir, false});
    const auto loaded = load_manifest(dir / "manifest.json");
    CHECK(loaded.code_version == kCodeVersion);
    CHECK(to_config_text(loaded.config) == to_config_text(m.config));
    CHECK(loaded.snapshots == m.snapshots);
    CHECK(loaded.loss_curve == m.loss_curve);
    CHECK(loaded.records.size() == m.records.size());
    CHECK(loaded.checkpoints.size() == 3);
    CHECK(loaded.seeds.pairs == m.seeds.pairs);

    const auto again = scratch("man_again");
    run(loaded.config, {false, again, false});
    CHECK(slurp(again / "metrics.csv") == slurp(dir / "metrics.csv"));
}

TEST_CASE("run errors surface before training") {
    ExperimentConfig bad = small_config("bad");
    bad.batch_size = 0;
    const auto dir = scratch("bad");
    CHECK_THROWS_AS(run(bad, {false, dir, false}), std::invalid_argument);
    CHECK_FALSE(fs::exists(dir));

    const auto blocker = scratch("blocker");
    fs::create_directories(blocker.parent_path());
    std::ofstream(blocker) << "file, not a directory";
    CHECK_THROWS_WITH_AS(run(small_config("x"), {false, blocker / "sub", false}), doctest::Contains("output directory"),
                         std::runtime_error);
    fs::remove(blocker);

    ExperimentConfig missing = small_config("missing");
    missing.signal_source = "/nonexistent/image.ppm";
    CHECK_THROWS(run(missing, {false, scratch("missing"), false}));
}

TEST_CASE("ppm signal source") {
    const auto dir = scratch("ppm_src");
    fs::create_directories(dir);
    save_ppm(gen_random_image(4, 9, 7), dir / "in.ppm");
    ExperimentConfig c = small_config("ppm");
    c.probes.hamming = c.probes.confusion = false;
    c.signal_source = (dir / "in.ppm").string();
    c.epochs = 1;
    const auto m = run(c, {false, dir / "out", false});
    CHECK(m.config.width == 9);
    CHECK(slurp(dir / "out" / "target.ppm") == slurp(dir / "in.ppm"));
}

TEST_CASE("render") {
    ExperimentConfig c = small_config("render");
    c.probes.slice = c.probes.hyperplane_render = c.probes.distance_matrix = true;
    const auto dir = scratch("render");
    const auto m = run(c, {false, dir, false});
    const auto manifest = dir / "manifest.json";

    const auto dm_files = render(manifest, "distance_matrix");
    REQUIRE(dm_files.size() == 1);
    const auto dm = load_pgm(dm_files[0]);
    CHECK(dm.width == dm.height);
    CHECK(dm.width == 40);
    for (int i = 0; i < dm.width; ++i) CHECK(dm.values[static_cast<std::size_t>(i * dm.width + i)] == 0);
    CHECK(*std::max_element(dm.values.begin(), dm.values.end()) == 255);
    CHECK(fs::exists(sidecar_path(dm_files[0])));

    const auto loss = render(manifest, "loss");
    const std::string csv = slurp(loss.at(0));
    CHECK(csv.rfind("epoch,loss\n1,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
    CHECK(std::count(csv.begin(), csv.end(), ',') == 7);

    const auto slices = render(manifest, "slice_high");
    REQUIRE(slices.size() == 3);
    const auto labels = rows_named(m.records, "slice_high_labels");
    for (std::size_t k = 0; k < slices.size(); ++k) {
        const auto img = load_pgm(slices[k]);
        CHECK(img.maxval == 65535);
        const std::set<std::uint16_t> grays(img.values.begin(), img.values.end());
        CHECK(std::to_string(grays.size()) == labels[k].value);
    }
    // cross-check one slice directly against the probe
    const auto cp = load_checkpoint(dir / m.checkpoints.back().path);
    const auto direct = region_slice_2d(cp.params, c.encoding, SlicePlane::high, 1.0, 16);
    const auto last = load_pgm(slices.back());
    CHECK(std::set<std::uint16_t>(last.values.begin(), last.values.end()).size() == direct.label_count);

    const auto bitmap = load_pgm(render(manifest, "hyperplane_bitmap").at(0));
    CHECK(bitmap.maxval == 255);

    const std::string dead = slurp(render(manifest, "dead_relu_layer").at(0));
    CHECK(dead.rfind("epoch,layer,value\n0,1,", 0) == 0);
    const std::string hist = slurp(render(manifest, "confusion_local_hist").at(0));
    CHECK(std::count(hist.begin(), hist.end(), '\n') == 1 + 3 * kConfusionBins);

    CHECK_THROWS_AS(render(manifest, "bogus"), std::invalid_argument);
    CHECK_THROWS_AS(render(manifest, "slice_low_labels_x"), std::invalid_argument);
    ExperimentConfig other = small_config("render_none");
    other.probes.dead = false;
    const auto none = scratch("render_none");
    run(other, {false, none, false});
    CHECK_THROWS_AS(render(none / "manifest.json", "dead_relu"), std::runtime_error);
}

TEST_CASE("default output root from the environment") {
    ::setenv(kOutputRootEnv, "/tmp/cmlp_root", 1);
    CHECK(default_output_dir("abc") == fs::path("/tmp/cmlp_root/abc"));
    ::unsetenv(kOutputRootEnv);
    CHECK(default_output_dir("abc") == fs::path("runs/abc"));
}

TEST_CASE("fig3 recipe: encoded input ends with the lower loss" * doctest::timeout(300)) {
    const auto root = scratch("fig3");
    std::vector<double> final_loss;
    for (const auto& cfg : recipe("fig3")) {
        const auto dir = root / cfg.name;
        run(cfg, {false, dir, false});
        std::stringstream ss(slurp(render(dir / "manifest.json", "loss").at(0)));
        std::string line, last;
        while (std::getline(ss, line)) last = line;
        CHECK(last.rfind("500,", 0) == 0);
        final_loss.push_back(std::stod(last.substr(last.find(',') + 1)));
    }
    REQUIRE(final_loss.size() == 2);  // identity, then L = 16
    CHECK(final_loss[1] < final_loss[0]);
}
