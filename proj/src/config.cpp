#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cmlp/experiment.hpp"
#include "cmlp/rng.hpp"

namespace cmlp {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& text) {
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) throw std::invalid_argument("not a number: '" + text + "'");
    return value;
}

bool parse_bool(const std::string& text) {
    if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "off" || text == "no") return false;
    throw std::invalid_argument("not a boolean: '" + text + "'");
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_number<int>(item));
    }
    return out;
}

std::string join(const std::vector<int>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(values[i]);
    }
    return out;
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Field {
    const char* key;
    Setter set;
    Getter get;
};

#define CMLP_INT_FIELD(key, member) \
    Field{key, [](ExperimentConfig& c, const std::string& v) { c.member = parse_number<decltype(c.member)>(v); }, \
          [](const ExperimentConfig& c) { return std::to_string(c.member); }}
#define CMLP_DOUBLE_FIELD(key, member) \
    Field{key, [](ExperimentConfig& c, const std::string& v) { c.member = parse_number<double>(v); }, \
          [](const ExperimentConfig& c) { return format_double(c.member); }}
#define CMLP_BOOL_FIELD(key, member) \
    Field{key, [](ExperimentConfig& c, const std::string& v) { c.member = parse_bool(v); }, \
          [](const ExperimentConfig& c) { return bool_text(c.member); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        Field{"name", [](ExperimentConfig& c, const std::string& v) { c.name = v; },
              [](const ExperimentConfig& c) { return c.name; }},
        CMLP_INT_FIELD("seed", seed),
        Field{"signal.source", [](ExperimentConfig& c, const std::string& v) { c.signal_source = v; },
              [](const ExperimentConfig& c) { return c.signal_source; }},
        Field{"signal.seed",
              [](ExperimentConfig& c, const std::string& v) {
                  if (v == "auto") c.signal_seed.reset();
                  else c.signal_seed = parse_number<std::uint64_t>(v);
              },
              [](const ExperimentConfig& c) {
                  return c.signal_seed ? std::to_string(*c.signal_seed) : std::string("auto");
              }},
        CMLP_INT_FIELD("image.width", width),
        CMLP_INT_FIELD("image.height", height),
        CMLP_DOUBLE_FIELD("interval.lo", interval.lo),
        CMLP_DOUBLE_FIELD("interval.hi", interval.hi),
        Field{"encoding.kind",
              [](ExperimentConfig& c, const std::string& v) { c.encoding.kind = parse_encoding_kind(v); },
              [](const ExperimentConfig& c) { return to_string(c.encoding.kind); }},
        CMLP_INT_FIELD("encoding.max_level", encoding.max_level),
        CMLP_DOUBLE_FIELD("encoding.degenerate_freq", encoding.degenerate_freq),
        Field{"arch.hidden", [](ExperimentConfig& c, const std::string& v) { c.hidden = parse_int_list(v); },
              [](const ExperimentConfig& c) { return join(c.hidden); }},
        Field{"init.scheme", [](ExperimentConfig& c, const std::string& v) { c.init = parse_init_scheme(v); },
              [](const ExperimentConfig& c) { return to_string(c.init); }},
        CMLP_DOUBLE_FIELD("adam.lr", adam.lr),
        CMLP_DOUBLE_FIELD("adam.beta1", adam.beta1),
        CMLP_DOUBLE_FIELD("adam.beta2", adam.beta2),
        CMLP_DOUBLE_FIELD("adam.eps", adam.eps),
        CMLP_INT_FIELD("train.epochs", epochs),
        CMLP_INT_FIELD("train.full_epochs", full_epochs),
        CMLP_INT_FIELD("train.batch_size", batch_size),
        Field{"train.snapshots",
              [](ExperimentConfig& c, const std::string& v) { c.snapshots = parse_int_list(v); },
              [](const ExperimentConfig& c) { return join(c.snapshots); }},
        CMLP_BOOL_FIELD("probe.census", probes.census),
        CMLP_BOOL_FIELD("probe.hamming", probes.hamming),
        CMLP_BOOL_FIELD("probe.confusion", probes.confusion),
        CMLP_BOOL_FIELD("probe.hyperplane_similarity", probes.hyperplane_similarity),
        CMLP_BOOL_FIELD("probe.boundary", probes.boundary),
        CMLP_BOOL_FIELD("probe.spectral", probes.spectral),
        CMLP_BOOL_FIELD("probe.dead", probes.dead),
        CMLP_BOOL_FIELD("probe.slice", probes.slice),
        CMLP_BOOL_FIELD("probe.hyperplane_render", probes.hyperplane_render),
        CMLP_BOOL_FIELD("probe.distance_matrix", probes.distance_matrix),
        CMLP_BOOL_FIELD("probe.reconstruction", probes.reconstruction),
        CMLP_INT_FIELD("probe.neighborhoods", probe.neighborhoods),
        CMLP_INT_FIELD("probe.neighborhood_size", probe.neighborhood_size),
        CMLP_INT_FIELD("probe.pairs", probe.pairs),
        CMLP_INT_FIELD("probe.min_sep", probe.min_sep),
        CMLP_DOUBLE_FIELD("probe.slice_extent", probe.slice_extent),
        CMLP_INT_FIELD("probe.slice_resolution", probe.slice_resolution),
        CMLP_INT_FIELD("probe.distance_subsample", probe.distance_subsample),
        CMLP_INT_FIELD("probe.member_cap", probe.member_cap),
        Field{"output.dir", [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; },
              [](const ExperimentConfig& c) { return c.output_dir; }},
    };
    return table;
}

#undef CMLP_INT_FIELD
#undef CMLP_DOUBLE_FIELD
#undef CMLP_BOOL_FIELD

void require(bool ok, const std::string& message) {
    if (!ok) throw std::invalid_argument("config: " + message);
}

}  // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig config;
    std::map<std::string, const Field*> by_key;
    for (const auto& f : fields()) by_key[f.key] = &f;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        const std::string where = "config line " + std::to_string(line_no) + ": ";
        if (eq == std::string::npos) throw std::invalid_argument(where + "expected 'key = value'");
        const std::string key = trim(std::string_view(stripped).substr(0, eq));
        const std::string value = trim(std::string_view(stripped).substr(eq + 1));
        const auto it = by_key.find(key);
        if (it == by_key.end()) throw std::invalid_argument(where + "unknown key '" + key + "'");
        try {
            it->second->set(config, value);
        } catch (const std::exception& e) {
            throw std::invalid_argument(where + key + ": " + e.what());
        }
    }
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    ExperimentConfig config = parse_config(ss.str());
    return config;
}

std::string to_config_text(const ExperimentConfig& config) {
    std::string out;
    for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
    return out;
}

void ExperimentConfig::validate() const {
    require(!name.empty() && name.find('/') == std::string::npos, "name must be non-empty without '/'");
    require(width >= 1 && height >= 1, "image dimensions must be >= 1");
    require(interval.lo < interval.hi, "interval.lo must be < interval.hi");
    encoding.validate();
    require(!hidden.empty(), "arch.hidden needs at least one hidden layer");
    for (int h : hidden) require(h >= 1, "hidden widths must be >= 1");
    require(adam.lr > 0.0, "adam.lr must be positive");
    require(adam.beta1 >= 0.0 && adam.beta1 < 1.0, "adam.beta1 must lie in [0, 1)");
    require(adam.beta2 >= 0.0 && adam.beta2 < 1.0, "adam.beta2 must lie in [0, 1)");
    require(adam.eps > 0.0, "adam.eps must be positive");
    require(epochs >= 0 && full_epochs >= 0, "epoch counts must be >= 0");
    const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    require(batch_size >= 1 && static_cast<std::size_t>(batch_size) <= n,
            "train.batch_size must lie in [1, pixel count]");
    for (int s : snapshots) require(s >= 0, "snapshot epochs must be >= 0");
    require(probe.member_cap >= 1, "probe.member_cap must be >= 1");
    if (probes.hamming || probes.confusion) {
        const int k = probe.neighborhood_size;
        require(k >= 1 && k % 2 == 1, "probe.neighborhood_size must be odd");
        require(k <= std::min(width, height), "probe.neighborhood_size exceeds the image");
        const auto interior = static_cast<std::size_t>(width - k + 1) * static_cast<std::size_t>(height - k + 1);
        require(probe.neighborhoods <= interior, "probe.neighborhoods exceeds interior centers");
        require(probe.pairs >= 1, "probe.pairs must be >= 1");
        require(probe.min_sep >= 0 && probe.min_sep <= std::max(width, height) - 1,
                "probe.min_sep exceeds the image extent");
        require(n >= 2, "pair probes need at least two pixels");
    }
    if (probes.slice) {
        require(encoding.kind != EncodingKind::identity, "probe.slice needs an encoded input space");
        require(probe.slice_resolution >= 2 && probe.slice_resolution <= 4096,
                "probe.slice_resolution must lie in [2, 4096]");
        require(probe.slice_extent > 0.0, "probe.slice_extent must be positive");
    }
    if (probes.distance_matrix) {
        require(probe.distance_subsample >= 1 && probe.distance_subsample <= n,
                "probe.distance_subsample must lie in [1, pixel count]");
    }
}

RunSeeds derive_run_seeds(const ExperimentConfig& config) {
    const auto m = config.seed;
    return RunSeeds{
        config.signal_seed ? *config.signal_seed : derive_seed(m, "signal"),
        derive_seed(m, "init"),
        derive_seed(m, "train.shuffle"),
        derive_seed(m, "probe.neighborhoods"),
        derive_seed(m, "probe.pairs"),
        derive_seed(m, "probe.distance"),
        derive_seed(m, "probe.power_iteration"),
    };
}

std::vector<int> effective_snapshots(const ExperimentConfig& config) {
    std::vector<int> out;
    for (int s : config.snapshots) {
        if (s <= config.epochs) out.push_back(s);
    }
    out.push_back(config.epochs);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::filesystem::path default_output_dir(const std::string& name) {
    if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') {
        return std::filesystem::path(root) / name;
    }
    return std::filesystem::path("runs") / name;
}

// ---------------------------------------------------------------------------
// Recipes

namespace {

ExperimentConfig base_config() {
    ExperimentConfig c;
    c.seed = 7;
    c.signal_seed = 7;
    c.probes = ProbeToggles{};
    c.probes.census = false;
    c.probes.hamming = false;
    c.probes.confusion = false;
    c.probes.hyperplane_similarity = false;
    c.probes.boundary = false;
    c.probes.spectral = false;
    c.probes.dead = false;
    c.probes.reconstruction = true;
    return c;
}

ExperimentConfig with_input(ExperimentConfig c, const std::string& figure, int level) {
    if (level < 0) {
        c.encoding = EncodingConfig{};
        c.name = figure + "_identity";
    } else {
        c.encoding.kind = EncodingKind::positional;
        c.encoding.max_level = level;
        c.name = figure + "_pe" + std::to_string(level);
    }
    return c;
}

std::vector<ExperimentConfig> over_levels(const ExperimentConfig& c, const std::string& figure,
                                          std::initializer_list<int> levels) {
    std::vector<ExperimentConfig> out;
    for (int level : levels) out.push_back(with_input(c, figure, level));
    return out;
}

}  // namespace

const std::vector<std::string>& recipe_names() {
    static const std::vector<std::string> names = {"fig2", "fig3", "fig4", "fig5", "fig6",
                                                   "fig7", "fig8", "fig9", "fig10"};
    return names;
}

std::vector<ExperimentConfig> recipe(const std::string& name) {
    ExperimentConfig c = base_config();
    constexpr int kIdentity = -1;
    if (name == "fig2") {
        // Activation regions and first-layer hyperplanes at initialization.
        c.epochs = 0;
        c.full_epochs = 0;
        c.snapshots = {0};
        c.probes.census = true;
        c.probes.hyperplane_render = true;
        c.probes.reconstruction = false;
        return over_levels(c, name, {kIdentity, 16});
    }
    if (name == "fig3") {
        c.snapshots = {0, 1, 10, 50, 100, 200, 300, 400, 500, 1000, 2000, 3000, 4000, 5000};
        c.probes.census = true;
        return over_levels(c, name, {kIdentity, 16});
    }
    if (name == "fig4") {
        c.epochs = 0;
        c.full_epochs = 0;
        c.snapshots = {0};
        c.probes.distance_matrix = true;
        c.probes.reconstruction = false;
        return over_levels(c, name, {kIdentity, 5, 16});
    }
    if (name == "fig5") {
        c.probes.confusion = true;
        c.probe.neighborhoods = 100;
        c.probe.pairs = 10000;
        return over_levels(c, name, {kIdentity, 16});
    }
    if (name == "fig6") {
        c.probes.hamming = true;
        return over_levels(c, name, {kIdentity, 5, 8, 16});
    }
    if (name == "fig7") {
        c.probes.hyperplane_similarity = true;
        return over_levels(c, name, {5, 8, 16});
    }
    if (name == "fig8") {
        c.snapshots = {5000};
        c.probes.slice = true;
        return over_levels(c, name, {5, 16});
    }
    if (name == "fig9") {
        c.probes.boundary = true;
        return over_levels(c, name, {5, 8, 16});
    }
    if (name == "fig10") {
        c.snapshots = {0, 1, 10, 50, 100, 250, 500, 1000, 2500, 5000};
        c.probes.spectral = true;
        c.probes.dead = true;
        std::vector<ExperimentConfig> out;
        for (int scale : {1, 2, 4, 8, 16}) {
            ExperimentConfig s = with_input(c, name, kIdentity);
            s.interval = {0.0, static_cast<double>(scale)};
            s.name += "_s" + std::to_string(scale);
            out.push_back(s);
        }
        ExperimentConfig sym = with_input(c, name, kIdentity);
        sym.interval = {-1.0, 1.0};
        sym.name += "_sym";
        out.push_back(sym);
        out.push_back(with_input(c, name, 8));
        return out;
    }
    throw std::invalid_argument("unknown recipe '" + name + "'");
}

}  // namespace cmlp
