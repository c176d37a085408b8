#include <algorithm>
#include <sstream>

#include "cmlp/experiment.hpp"

namespace cmlp {

const std::vector<std::string>& metric_registry() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out = {
            "train_loss",
            "dataset_loss",
            "psnr",
            "region_count",
            "hanin_log_bound",
            "hamming_local",
            "hamming_global",
        };
        for (const char* scope : {"local", "global"}) {
            for (const char* field : {"mean_cos", "min_inner", "eta", "min_cos", "eta_cos", "pairs",
                                      "skipped", "hist"}) {
                out.push_back(std::string("confusion_") + scope + "_" + field);
            }
        }
        for (const char* name : {"hyperplane_similarity", "hyperplane_cosines", "boundary_distance",
                                 "spectral_norm", "spectral_norm_product", "dead_relu", "dead_relu_layer",
                                 "slice_low", "slice_low_labels", "slice_high", "slice_high_labels",
                                 "hyperplane_marked", "hyperplane_bitmap", "distance_matrix"}) {
            out.emplace_back(name);
        }
        return out;
    }();
    return names;
}

bool is_registered_metric(std::string_view name) {
    const auto& names = metric_registry();
    return std::find(names.begin(), names.end(), name) != names.end();
}

std::string metrics_csv(const std::vector<ProbeRecord>& records) {
    std::string out = "epoch,metric,layer,kind,value\n";
    for (const auto& r : records) {
        out += std::to_string(r.epoch);
        out += ',';
        out += r.metric;
        out += ',';
        if (r.layer >= 0) out += std::to_string(r.layer);
        out += ',';
        out += r.kind;
        out += ',';
        out += r.value;
        out += '\n';
    }
    return out;
}

std::vector<ProbeRecord> parse_metrics_csv(std::string_view text) {
    std::vector<ProbeRecord> out;
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != "epoch,metric,layer,kind,value") {
        throw std::runtime_error("metrics.csv: missing or unexpected header");
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.emplace_back();
        if (cells.size() != 5) {
            throw std::runtime_error("metrics.csv line " + std::to_string(line_no) + ": expected 5 fields");
        }
        ProbeRecord r;
        try {
            r.epoch = std::stoi(cells[0]);
            r.layer = cells[2].empty() ? -1 : std::stoi(cells[2]);
        } catch (const std::exception&) {
            throw std::runtime_error("metrics.csv line " + std::to_string(line_no) + ": bad integer field");
        }
        r.metric = cells[1];
        r.kind = cells[3];
        r.value = cells[4];
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace cmlp
