#include <fstream>

#include "json.hpp"

#include "odenet/enhancer.hpp"
#include "odenet/error.hpp"

namespace odenet {
namespace {

constexpr int kBundleVersion = 1;

} // namespace

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create bundle directory " + dir.string());
    nn::save_model(bundle.interp_net, dir / "interp.oden");
    nn::save_model(bundle.enhance_net, dir / "enhance.oden");

    nlohmann::ordered_json j;
    j["format_version"] = kBundleVersion;
    j["sigma_global"] = bundle.sigma_global;
    j["image_sigma"] = bundle.image_sigma;
    j["image_only"] = bundle.image_only;
    j["interp_descriptor"] = bundle.interp_net.descriptor();
    j["enhance_descriptor"] = bundle.enhance_net.descriptor();
    j["training"] = nlohmann::ordered_json::parse(bundle.training_echo);
    std::ofstream f(dir / "bundle.json", std::ios::trunc);
    if (!f) throw Error(ErrorKind::Io, "cannot write " + (dir / "bundle.json").string());
    f << j.dump(2) << '\n';
}

ModelBundle load_bundle(const std::filesystem::path& dir) {
    std::ifstream f(dir / "bundle.json");
    if (!f) throw Error(ErrorKind::Io, "cannot open " + (dir / "bundle.json").string());
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::BadHeader, std::string("malformed bundle.json: ") + e.what());
    }
    try {
        if (j.at("format_version").get<int>() != kBundleVersion)
            throw Error(ErrorKind::VersionMismatch, "unsupported bundle format version");
        ModelBundle b;
        b.sigma_global = j.at("sigma_global").get<double>();
        b.image_sigma = j.at("image_sigma").get<double>();
        b.image_only = j.at("image_only").get<bool>();
        b.training_echo = j.contains("training") ? j["training"].dump() : "{}";
        b.interp_net = nn::load_model(dir / "interp.oden", j.at("interp_descriptor").get<std::string>());
        b.enhance_net = nn::load_model(dir / "enhance.oden", j.at("enhance_descriptor").get<std::string>());
        if (!(b.sigma_global > 0.0) || !(b.image_sigma > 0.0))
            throw Error(ErrorKind::OutOfRange, "bundle normalization constants must be positive");
        if (b.interp_net.input_channels() != 1 || b.enhance_net.input_channels() != (b.image_only ? 1u : 2u))
            throw Error(ErrorKind::DescriptorMismatch, "bundle networks have unexpected input channels");
        return b;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::BadHeader, std::string("invalid bundle.json: ") + e.what());
    }
}

} // namespace odenet
