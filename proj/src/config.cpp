#include "odenet/config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

#include "odenet/error.hpp"

namespace odenet {
namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
    throw Error(ErrorKind::Config, path + ": " + what);
}

// Reads one JSON object, remembering which keys were consumed so leftovers can
// be reported as unknown.
class Section {
public:
    Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) config_error(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const Json* find(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    Section child(const std::string& key) {
        const Json* v = find(key);
        static const Json empty = Json::object();
        return Section(v ? *v : empty, key_path(key));
    }

    void number(const std::string& key, double& out, double lo, double hi, bool lo_open, bool hi_open) {
        const Json* v = find(key);
        if (!v) return;
        if (!v->is_number()) config_error(key_path(key), "expected a number");
        const double x = v->get<double>();
        const bool ok = (lo_open ? x > lo : x >= lo) && (hi_open ? x < hi : x <= hi);
        if (!ok) {
            std::ostringstream os;
            os.precision(17);
            os << "value " << x << " outside " << (lo_open ? "(" : "[") << lo << ", " << hi << (hi_open ? ")" : "]");
            config_error(key_path(key), os.str());
        }
        out = x;
    }

    template <class T>
    void integer(const std::string& key, T& out, std::uint64_t lo, std::uint64_t hi) {
        const Json* v = find(key);
        if (!v) return;
        if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0))
            config_error(key_path(key), "expected a non-negative integer");
        const std::uint64_t x = v->get<std::uint64_t>();
        if (x < lo || x > hi)
            config_error(key_path(key), "value " + std::to_string(x) + " outside [" + std::to_string(lo) + ", " +
                                            std::to_string(hi) + "]");
        out = static_cast<T>(x);
    }

    void boolean(const std::string& key, bool& out) {
        const Json* v = find(key);
        if (!v) return;
        if (!v->is_boolean()) config_error(key_path(key), "expected true or false");
        out = v->get<bool>();
    }

    void string(const std::string& key, std::string& out) {
        const Json* v = find(key);
        if (!v) return;
        if (!v->is_string()) config_error(key_path(key), "expected a string");
        out = v->get<std::string>();
    }

    const Json* raw(const std::string& key) { return find(key); }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.contains(it.key())) config_error(key_path(it.key()), "unknown key");
    }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

constexpr std::uint64_t kMaxSeed = std::numeric_limits<std::uint64_t>::max();

void read_train(Section s, NetTrainConfig& c) {
    s.integer("epochs", c.epochs, 1, 10000);
    s.integer("batch", c.batch, 1, 4096);
    s.number("lr", c.lr, 0.0, 1.0, true, false);
    s.number("lr_decay", c.lr_decay, 0.0, 1.0, true, false);
    s.integer("seed", c.seed, 0, kMaxSeed);
    s.finish();
}

Json write_train(const NetTrainConfig& c) {
    return Json{{"epochs", c.epochs}, {"batch", c.batch}, {"lr", c.lr}, {"lr_decay", c.lr_decay}, {"seed", c.seed}};
}

PipelineConfig from_json(const Json& root) {
    PipelineConfig c;
    Section top(root, "");

    {
        Section s = top.child("terrain");
        s.integer("n", c.terrain.n, 64, 8192);
        if (c.terrain.n & (c.terrain.n - 1)) config_error("terrain.n", "must be a power of two");
        s.number("beta", c.terrain.beta, 0.5, 4.0, true, false);
        s.number("rms", c.terrain.rms, 0.0, 1e6, true, false);
        s.number("spacing", c.terrain.spacing, 0.0, 1e6, true, false);
        s.integer("seed", c.terrain.seed, 0, kMaxSeed);
        s.finish();
    }
    {
        Section s = top.child("sun");
        s.number("azimuth_deg", c.render.sun.azimuth_deg, 0.0, 360.0, false, true);
        s.number("elevation_deg", c.render.sun.elevation_deg, 0.0, 90.0, true, false);
        s.finish();
    }
    {
        Section s = top.child("render");
        s.number("albedo", c.render.albedo, 0.0, 1.0, true, false);
        s.number("noise_sigma", c.render.noise_sigma, 0.0, 1.0, false, false);
        s.integer("seed", c.render.seed, 0, kMaxSeed);
        s.finish();
    }
    {
        Section s = top.child("dataset");
        s.integer("levels", c.dataset.levels, 1, 8);
        s.integer("tiles_per_level", c.dataset.tiles_per_level, 1, 1000000);
        s.integer("seed", c.dataset.seed, 0, kMaxSeed);
        s.finish();
    }
    {
        Section s = top.child("architecture");
        s.integer("interp_width", c.architecture.interp_width, 1, 512);
        if (const Json* w = s.raw("enhance_widths")) {
            if (!w->is_array() || w->empty()) config_error("architecture.enhance_widths", "expected a non-empty array");
            c.architecture.enhance_widths.clear();
            for (std::size_t i = 0; i < w->size(); ++i) {
                const Json& e = (*w)[i];
                const std::string p = "architecture.enhance_widths[" + std::to_string(i) + "]";
                if (!e.is_number_unsigned() || e.get<std::uint64_t>() < 1 || e.get<std::uint64_t>() > 512)
                    config_error(p, "expected an integer in [1, 512]");
                c.architecture.enhance_widths.push_back(e.get<std::size_t>());
            }
        }
        s.boolean("image_only", c.architecture.image_only);
        s.finish();
    }
    read_train(top.child("train_interp"), c.train_interp);
    read_train(top.child("train_enhance"), c.train_enhance);
    {
        Section s = top.child("window");
        s.integer("stride", c.window.stride, 2, kTile);
        if (c.window.stride % 2 != 0) config_error("window.stride", "must be even");
        s.finish();
    }
    {
        Section s = top.child("validation");
        s.integer("n_theta", c.validation.n_theta, 8, 1u << 16);
        s.integer("n_r", c.validation.n_r, 0, 1u << 16);
        s.number("r_min_frac", c.validation.r_min_frac, 0.0, 1.0, false, true);
        s.number("sigma_px", c.validation.sigma_px, 0.0, 1e6, false, false);
        std::string mag = c.validation.magnitude == specval::Magnitude::Log ? "log" : "raw";
        s.string("magnitude", mag);
        if (mag == "log") c.validation.magnitude = specval::Magnitude::Log;
        else if (mag == "raw") c.validation.magnitude = specval::Magnitude::Raw;
        else config_error("validation.magnitude", "expected \"log\" or \"raw\"");
        s.finish();
    }
    {
        Section s = top.child("evaluation");
        s.integer("holdout_seed", c.evaluation.holdout_seed, 0, kMaxSeed);
        s.integer("holdout_tiles", c.evaluation.holdout_tiles, 1, 1000000);
        s.integer("seam_crop", c.evaluation.seam_crop, 32, 8192);
        s.integer("seam_stride", c.evaluation.seam_stride, 2, kTile);
        if (c.evaluation.seam_stride % 2 != 0) config_error("evaluation.seam_stride", "must be even");
        s.finish();
    }
    top.integer("enhance_levels", c.enhance_levels, 1, 4);
    top.integer("threads", c.threads, 1, 256);
    top.string("output_dir", c.output_dir);
    top.finish();

    return c;
}

Json to_json(const PipelineConfig& c) {
    Json j;
    j["terrain"] = {{"n", c.terrain.n},
                    {"beta", c.terrain.beta},
                    {"rms", c.terrain.rms},
                    {"spacing", c.terrain.spacing},
                    {"seed", c.terrain.seed}};
    j["sun"] = {{"azimuth_deg", c.render.sun.azimuth_deg}, {"elevation_deg", c.render.sun.elevation_deg}};
    j["render"] = {{"albedo", c.render.albedo}, {"noise_sigma", c.render.noise_sigma}, {"seed", c.render.seed}};
    j["dataset"] = {{"levels", c.dataset.levels},
                    {"tiles_per_level", c.dataset.tiles_per_level},
                    {"seed", c.dataset.seed}};
    j["architecture"] = {{"interp_width", c.architecture.interp_width},
                         {"enhance_widths", c.architecture.enhance_widths},
                         {"image_only", c.architecture.image_only}};
    j["train_interp"] = write_train(c.train_interp);
    j["train_enhance"] = write_train(c.train_enhance);
    j["window"] = {{"stride", c.window.stride}};
    j["validation"] = {{"n_theta", c.validation.n_theta},
                       {"n_r", c.validation.n_r},
                       {"r_min_frac", c.validation.r_min_frac},
                       {"sigma_px", c.validation.sigma_px},
                       {"magnitude", c.validation.magnitude == specval::Magnitude::Log ? "log" : "raw"}};
    j["evaluation"] = {{"holdout_seed", c.evaluation.holdout_seed},
                       {"holdout_tiles", c.evaluation.holdout_tiles},
                       {"seam_crop", c.evaluation.seam_crop},
                       {"seam_stride", c.evaluation.seam_stride}};
    j["enhance_levels"] = c.enhance_levels;
    j["threads"] = c.threads;
    j["output_dir"] = c.output_dir;
    return j;
}

} // namespace

PipelineConfig parse_config_text(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Config, std::string("malformed JSON: ") + e.what());
    }
    return from_json(j);
}

PipelineConfig parse_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::Io, "cannot open config " + path.string());
    std::ostringstream os;
    os << f.rdbuf();
    return parse_config_text(os.str());
}

std::string serialize_config(const PipelineConfig& config) { return to_json(config).dump(2) + "\n"; }

void validate_for_pipeline(const PipelineConfig& c) {
    if (c.terrain.n >> c.enhance_levels < 64)
        config_error("enhance_levels", "terrain.n / 2^enhance_levels must be at least 64");
    if (c.evaluation.seam_crop * 2 > c.terrain.n)
        config_error("evaluation.seam_crop", "must be at most terrain.n / 2");
    if ((c.terrain.n >> (c.dataset.levels - 1)) < kTile)
        config_error("dataset.levels", "coarsest pyramid level must hold a 32x32 tile");
}

std::string training_echo(const PipelineConfig& config) {
    const Json j = to_json(config);
    Json out;
    for (const char* key : {"dataset", "architecture", "train_interp", "train_enhance"}) out[key] = j[key];
    return out.dump();
}

bool operator==(const PipelineConfig& a, const PipelineConfig& b) { return to_json(a) == to_json(b); }

} // namespace odenet
