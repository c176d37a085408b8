#include <cmath>
#include <numeric>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "cmlp/checkpoint.hpp"
#include "cmlp/experiment.hpp"
#include "cmlp/probes.hpp"

namespace cmlp {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string na_or(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

std::string suffix(int epoch, int layer) {
    std::string s = "_e" + std::to_string(epoch);
    if (layer >= 0) s += "_l" + std::to_string(layer);
    return s;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

TargetSignal clamped_prediction(const MlpParams& p, const EncodedDataset& ds) {
    TargetSignal out;
    out.width = ds.width;
    out.height = ds.height;
    out.channels = ds.output_dim();
    out.pixels = predict(p, ds.inputs).cwiseMax(0.0).cwiseMin(1.0);
    return out;
}

/// Everything a snapshot needs that does not change during training.
struct ProbeContext {
    const ExperimentConfig& config;
    const RunSeeds& seeds;
    const CoordinateGrid& grid;
    const EncodedDataset& ds;
    const TargetSignal& target;
    const fs::path& dir;
    std::vector<Neighborhood> neighborhoods;
    std::vector<IndexPair> local_pairs;
    std::vector<IndexPair> global_pairs;
};

class SnapshotProbes {
public:
    SnapshotProbes(const ProbeContext& ctx, std::vector<ProbeRecord>& records) : ctx_(ctx), records_(records) {}

    void fire(int epoch, const MlpParams& p) {
        epoch_ = epoch;
        const auto& on = ctx_.config.probes;
        scalar("dataset_loss", format_double(dataset_loss(p, ctx_.ds)));
        if (on.reconstruction) reconstruction(p);
        if (on.census) {
            const auto census = region_census(p, ctx_.ds, ctx_.config.probe.member_cap);
            scalar("region_count", std::to_string(census.unique_pattern_count));
        }
        if (on.hamming) hamming_probe(p);
        if (on.confusion) confusion_probe(p);
        if (on.hyperplane_similarity) {
            for (std::size_t l = 0; l < p.hidden_layer_count(); ++l) {
                const auto sim = hyperplane_normal_similarity(p, l);
                const int layer = static_cast<int>(l) + 1;
                scalar("hyperplane_similarity", format_double(sim.mean_abs_offdiag), layer);
                matrix("hyperplane_cosines", sim.cosines, layer);
            }
        }
        if (on.boundary) {
            std::string value = "NA";
            try {
                value = format_double(mean_boundary_distance(p, ctx_.ds));
            } catch (const DegenerateGeometryError&) {
            }
            scalar("boundary_distance", value);
        }
        if (on.spectral) {
            PowerIterationOptions opts;
            opts.seed = ctx_.seeds.power_iteration;
            const auto report = spectral_norm_product(p, opts);
            for (std::size_t l = 0; l < report.layer_norms.size(); ++l) {
                scalar("spectral_norm", format_double(report.layer_norms[l]), static_cast<int>(l) + 1);
            }
            scalar("spectral_norm_product", format_double(report.product));
        }
        if (on.dead) {
            const auto per_layer = dead_relu_per_layer(p, ctx_.ds);
            std::size_t total = 0;
            for (std::size_t l = 0; l < per_layer.size(); ++l) {
                total += per_layer[l];
                scalar("dead_relu_layer", std::to_string(per_layer[l]), static_cast<int>(l) + 1);
            }
            scalar("dead_relu", std::to_string(total));
        }
        if (on.slice) {
            for (auto plane : {SlicePlane::low, SlicePlane::high}) {
                const auto img = region_slice_2d(p, ctx_.config.encoding, plane, ctx_.config.probe.slice_extent,
                                                 ctx_.config.probe.slice_resolution);
                const std::string name = "slice_" + to_string(plane);
                scalar(name + "_labels", std::to_string(img.label_count));
                Matrix m(img.height, img.width);
                for (std::size_t k = 0; k < img.labels.size(); ++k) m.data()[k] = img.labels[k];
                matrix(name, m);
            }
        }
        if (on.hyperplane_render) {
            const auto bmp = hyperplane_render_2d(p, ctx_.grid, ctx_.config.encoding);
            scalar("hyperplane_marked", std::to_string(bmp.marked_count()));
            Matrix m(bmp.height, bmp.width);
            for (std::size_t k = 0; k < bmp.marked.size(); ++k) m.data()[k] = bmp.marked[k];
            matrix("hyperplane_bitmap", m);
        }
    }

    void scalar(const std::string& metric, std::string value, int layer = -1) {
        records_.push_back({epoch_, metric, layer, "scalar", std::move(value)});
    }

    void matrix(const std::string& metric, const Matrix& m, int layer = -1) {
        const std::string rel = "matrices/" + metric + suffix(epoch_, layer) + ".bin";
        save_matrix(ctx_.dir / rel, m);
        records_.push_back({epoch_, metric, layer, "matrix", rel});
    }

    void set_epoch(int epoch) { epoch_ = epoch; }

private:
    void reconstruction(const MlpParams& p) {
        const auto pred = clamped_prediction(p, ctx_.ds);
        save_ppm(pred, ctx_.dir / ("recon_e" + std::to_string(epoch_) + ".ppm"));
        scalar("psnr", format_double(psnr(pred, ctx_.target)));
    }

    void hamming_probe(const MlpParams& p) {
        scalar("hamming_local", na_or(mean_hamming_local(p, ctx_.ds, ctx_.neighborhoods)));
        const auto patterns = patterns_of(p, ctx_.ds.inputs);
        double sum = 0.0;
        for (const auto& [i, j] : ctx_.global_pairs) sum += static_cast<double>(hamming(patterns[i], patterns[j]));
        scalar("hamming_global", format_double(sum / static_cast<double>(ctx_.global_pairs.size())));
    }

    void confusion_probe(const MlpParams& p) {
        const GradientFactors grads(p, ctx_.ds);
        const std::pair<ConfusionScope, const std::vector<IndexPair>*> scopes[] = {
            {ConfusionScope::local, &ctx_.local_pairs}, {ConfusionScope::global, &ctx_.global_pairs}};
        for (const auto& [scope, pairs] : scopes) {
            const std::string prefix = "confusion_" + to_string(scope) + "_";
            std::optional<ConfusionReport> report;
            try {
                report = confusion_report(grads, scope, *pairs);
            } catch (const EmptyReportError&) {
            }
            auto value = [&](double v) { return report ? format_double(v) : std::string("NA"); };
            const ConfusionReport r = report.value_or(ConfusionReport{});
            scalar(prefix + "mean_cos", value(r.mean_cosine));
            scalar(prefix + "min_inner", value(r.min_inner_product));
            scalar(prefix + "eta", value(r.bound_eta));
            scalar(prefix + "min_cos", value(r.min_cosine));
            scalar(prefix + "eta_cos", value(r.bound_eta_cosine));
            scalar(prefix + "pairs", std::to_string(r.pair_count));
            scalar(prefix + "skipped", std::to_string(r.skipped_zero_grad + r.skipped_self_pairs));
            std::string hist;
            for (int b = 0; b < kConfusionBins; ++b) {
                if (b) hist += ';';
                hist += std::to_string(r.cosine_histogram[static_cast<std::size_t>(b)]);
            }
            records_.push_back({epoch_, prefix + "hist", -1, "histogram", hist});
        }
    }

    const ProbeContext& ctx_;
    std::vector<ProbeRecord>& records_;
    int epoch_ = 0;
};

json seeds_json(const RunSeeds& s) {
    return json{{"signal", s.signal},
                {"init", s.init},
                {"shuffle", s.shuffle},
                {"neighborhoods", s.neighborhoods},
                {"pairs", s.pairs},
                {"distance", s.distance},
                {"power_iteration", s.power_iteration}};
}

std::vector<int> layer_sizes(const ExperimentConfig& config, int input_dim, int output_dim) {
    std::vector<int> sizes{input_dim};
    sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
    sizes.push_back(output_dim);
    return sizes;
}

}  // namespace

RunManifest run(const ExperimentConfig& input_config, const RunOptions& options) {
    ExperimentConfig config = input_config;
    if (options.full) config.epochs = config.full_epochs;
    if (!options.output_dir.empty()) config.output_dir = options.output_dir.string();
    if (config.output_dir.empty()) config.output_dir = default_output_dir(config.name).string();
    config.validate();

    const RunSeeds seeds = derive_run_seeds(config);
    TargetSignal target;
    if (config.signal_source == "random") {
        target = gen_random_image(seeds.signal, config.width, config.height);
    } else {
        target = load_ppm(config.signal_source);
        config.width = target.width;
        config.height = target.height;
        config.validate();
    }

    const fs::path dir = config.output_dir;
    try {
        fs::create_directories(dir / "checkpoints");
        fs::create_directories(dir / "matrices");
    } catch (const fs::filesystem_error& e) {
        throw std::runtime_error("cannot create output directory " + dir.string() + ": " + e.what());
    }
    write_text(dir / "config.txt", to_config_text(config));
    save_ppm(target, dir / "target.ppm");

    const CoordinateGrid grid = make_grid(config.width, config.height, config.interval);
    const EncodedDataset ds = encode_dataset(grid, target, config.encoding);

    ProbeContext ctx{config, seeds, grid, ds, target, dir, {}, {}, {}};
    if (config.probes.hamming || config.probes.confusion) {
        ctx.neighborhoods = sample_neighborhoods(grid, config.probe.neighborhood_size, config.probe.neighborhoods,
                                                 seeds.neighborhoods);
        ctx.local_pairs = neighborhood_pairs(ctx.neighborhoods);
        ctx.global_pairs = sample_distant_pairs(config.width, config.height, config.probe.pairs,
                                                config.probe.min_sep, seeds.pairs);
    }

    RunManifest manifest;
    manifest.directory = dir;
    manifest.config = config;
    manifest.seeds = seeds;
    manifest.snapshots = effective_snapshots(config);

    std::vector<ProbeRecord> probe_records;
    SnapshotProbes probes(ctx, probe_records);
    const auto sizes = layer_sizes(config, ds.input_dim(), ds.output_dim());

    if (config.probes.census) {
        probes.set_epoch(0);
        const auto bound = hanin_bound(static_cast<std::size_t>(std::accumulate(config.hidden.begin(),
                                                                                config.hidden.end(), 0)),
                                       static_cast<std::size_t>(ds.input_dim()));
        probes.scalar("hanin_log_bound", format_double(bound.log_value));
    }
    if (config.probes.distance_matrix) {
        probes.set_epoch(0);
        const auto dm = distance_matrix(ds, config.probe.distance_subsample, seeds.distance);
        probes.matrix("distance_matrix", dm.distances);
    }

    const long steps_per_epoch =
        static_cast<long>((ds.size() + static_cast<std::size_t>(config.batch_size) - 1) /
                          static_cast<std::size_t>(config.batch_size));
    auto hook = [&](int epoch, const MlpParams& p) {
        if (options.verbose) std::cerr << config.name << ": snapshot epoch " << epoch << "\n";
        probes.fire(epoch, p);
        const std::string rel = "checkpoints/params_e" + std::to_string(epoch) + ".bin";
        CheckpointMeta meta{sizes, seeds.init, to_string(config.init), config.adam, epoch * steps_per_epoch, epoch};
        save_checkpoint(dir / rel, p, meta);
        manifest.checkpoints.push_back({epoch, rel});
    };

    MlpParams params = init_mlp(sizes, seeds.init, config.init);
    AdamState state = AdamState::for_params(params, config.adam);
    TrainConfig tc;
    tc.epochs = config.epochs;
    tc.batch_size = config.batch_size;
    tc.shuffle_seed = seeds.shuffle;
    tc.snapshot_epochs = manifest.snapshots;
    const TrainResult result = train(ds, std::move(params), std::move(state), tc, hook);
    manifest.loss_curve = result.loss_curve;

    // Interleave loss rows with probe rows, epoch by epoch; both are already sorted.
    std::vector<ProbeRecord> records;
    records.reserve(probe_records.size() + result.loss_curve.size());
    std::size_t next = 0;
    for (int e = 0; e <= config.epochs; ++e) {
        if (e >= 1) records.push_back({e, "train_loss", -1, "scalar", format_double(result.loss_curve[e - 1])});
        while (next < probe_records.size() && probe_records[next].epoch == e) records.push_back(probe_records[next++]);
    }
    manifest.records = std::move(probe_records);
    write_text(dir / "metrics.csv", metrics_csv(records));

    json j;
    j["code_version"] = manifest.code_version;
    j["config_text"] = to_config_text(config);
    j["seeds"] = seeds_json(seeds);
    j["snapshots"] = manifest.snapshots;
    j["target"] = "target.ppm";
    j["metrics_csv"] = "metrics.csv";
    json cps = json::array();
    for (const auto& c : manifest.checkpoints) cps.push_back({{"epoch", c.epoch}, {"path", c.path}});
    j["checkpoints"] = cps;
    json recs = json::array();
    for (const auto& r : manifest.records) {
        recs.push_back({{"epoch", r.epoch}, {"metric", r.metric}, {"layer", r.layer}, {"kind", r.kind},
                        {"value", r.value}});
    }
    j["records"] = recs;
    j["loss_curve"] = manifest.loss_curve;
    write_text(manifest.manifest_path(), j.dump(2) + "\n");
    return manifest;
}

RunManifest load_manifest(const fs::path& path) {
    const json j = json::parse(read_text(path));
    RunManifest m;
    m.directory = path.parent_path();
    m.code_version = j.at("code_version").get<std::string>();
    m.config = parse_config(j.at("config_text").get<std::string>());
    const auto& s = j.at("seeds");
    m.seeds = RunSeeds{s.at("signal"), s.at("init"), s.at("shuffle"), s.at("neighborhoods"),
                       s.at("pairs"), s.at("distance"), s.at("power_iteration")};
    m.snapshots = j.at("snapshots").get<std::vector<int>>();
    for (const auto& c : j.at("checkpoints")) m.checkpoints.push_back({c.at("epoch"), c.at("path")});
    for (const auto& r : j.at("records")) {
        m.records.push_back({r.at("epoch"), r.at("metric"), r.at("layer"), r.at("kind"), r.at("value")});
    }
    m.loss_curve = j.at("loss_curve").get<std::vector<double>>();
    return m;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

GrayImage to_gray(const std::string& metric, const Matrix& m, json& sidecar) {
    GrayImage img;
    img.width = static_cast<int>(m.cols());
    img.height = static_cast<int>(m.rows());
    img.values.resize(static_cast<std::size_t>(m.size()));
    const bool labels = metric == "slice_low" || metric == "slice_high";
    if (labels) {
        img.maxval = 65535;
        for (Eigen::Index k = 0; k < m.size(); ++k) {
            const double v = m.data()[k];
            if (v < 0 || v > 65535) throw std::runtime_error("label image has more than 65536 labels");
            img.values[static_cast<std::size_t>(k)] = static_cast<std::uint16_t>(v);
        }
        sidecar = {{"encoding", "label id as 16-bit gray"}};
    } else if (metric == "hyperplane_bitmap") {
        for (Eigen::Index k = 0; k < m.size(); ++k) img.values[static_cast<std::size_t>(k)] = m.data()[k] > 0 ? 0 : 255;
        sidecar = {{"encoding", "marked pixels black"}};
    } else {
        const double lo = m.minCoeff();
        const double hi = m.maxCoeff();
        const double span = hi - lo;
        for (Eigen::Index k = 0; k < m.size(); ++k) {
            const double t = span > 0 ? (m.data()[k] - lo) / span : 0.0;
            img.values[static_cast<std::size_t>(k)] = static_cast<std::uint16_t>(std::lround(t * 255.0));
        }
        sidecar = {{"encoding", "min-max normalized"}, {"min", lo}, {"max", hi}};
    }
    return img;
}

}  // namespace

std::vector<fs::path> render(const fs::path& manifest_path, const std::string& metric) {
    const bool loss = metric == "loss" || metric == "train_loss";
    if (!loss && !is_registered_metric(metric)) throw std::invalid_argument("unknown metric '" + metric + "'");
    const RunManifest m = load_manifest(manifest_path);
    const fs::path out_dir = m.directory / "render";
    fs::create_directories(out_dir);
    std::vector<fs::path> written;

    if (loss) {
        std::string csv = "epoch,loss\n";
        for (std::size_t e = 0; e < m.loss_curve.size(); ++e) {
            csv += std::to_string(e + 1) + "," + format_double(m.loss_curve[e]) + "\n";
        }
        written.push_back(out_dir / "loss.csv");
        write_text(written.back(), csv);
        return written;
    }

    std::vector<ProbeRecord> selected;
    for (const auto& r : m.records) {
        if (r.metric == metric) selected.push_back(r);
    }
    if (selected.empty()) throw std::runtime_error("metric '" + metric + "' was not recorded in this run");

    if (selected.front().kind == "matrix") {
        for (const auto& r : selected) {
            json sidecar;
            const GrayImage img = to_gray(metric, load_matrix(m.directory / r.value), sidecar);
            const fs::path file = out_dir / (metric + suffix(r.epoch, r.layer) + ".pgm");
            save_pgm(img, file);
            write_text(sidecar_path(file), sidecar.dump(2) + "\n");
            written.push_back(file);
        }
        return written;
    }

    std::string csv;
    if (selected.front().kind == "histogram") {
        csv = "epoch,bin_lo,bin_hi,count\n";
        for (const auto& r : selected) {
            std::stringstream ss(r.value);
            std::string cell;
            int b = 0;
            while (std::getline(ss, cell, ';')) {
                csv += std::to_string(r.epoch) + "," + format_double(ConfusionReport::bin_edge(b)) + "," +
                       format_double(ConfusionReport::bin_edge(b + 1)) + "," + cell + "\n";
                ++b;
            }
        }
    } else {
        csv = "epoch,layer,value\n";
        for (const auto& r : selected) {
            csv += std::to_string(r.epoch) + "," + (r.layer >= 0 ? std::to_string(r.layer) : "") + "," + r.value + "\n";
        }
    }
    written.push_back(out_dir / (metric + ".csv"));
    write_text(written.back(), csv);
    return written;
}

}  // namespace cmlp
