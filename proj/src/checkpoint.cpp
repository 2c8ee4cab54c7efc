#include "pf/checkpoint.hpp"

#include "pf/errors.hpp"
#include "pf/io.hpp"

namespace pf {

using nlohmann::json;

void save_checkpoint(const std::filesystem::path& dir, const ParameterSet& params,
                     const json& model_section) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format"] = "pf-checkpoint-v1";
    manifest["dtype"] = "f64";
    manifest["endianness"] = "little";
    manifest["blob"] = "params.f64";
    manifest["model"] = model_section;

    std::vector<double> blob;
    json entries = json::array();
    std::size_t offset_bytes = 0;
    for (const auto& [name, t] : params) {
        json e;
        e["name"] = name;
        e["shape"] = t.shape();
        e["offset"] = offset_bytes;
        entries.push_back(e);
        blob.insert(blob.end(), t.data().begin(), t.data().end());
        offset_bytes += t.size() * sizeof(double);
    }
    manifest["params"] = entries;

    write_f64_blob(dir / "params.f64", blob);
    write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
    json manifest;
    try {
        manifest = json::parse(read_text(dir / "manifest.json"));
    } catch (const json::parse_error& e) {
        throw IoError("checkpoint manifest unreadable: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != "pf-checkpoint-v1")
        throw IoError("unrecognized checkpoint format in " + dir.string());
    const auto blob = read_f64_blob(dir / manifest.value("blob", "params.f64"));

    LoadedCheckpoint out;
    out.model_section = manifest.value("model", json::object());
    for (const auto& e : manifest.at("params")) {
        const std::string name = e.at("name").get<std::string>();
        const auto shape = e.at("shape").get<std::vector<std::size_t>>();
        const std::size_t offset = e.at("offset").get<std::size_t>() / sizeof(double);
        std::size_t count = 1;
        for (auto s : shape) count *= s;
        if (offset + count > blob.size())
            throw IoError("checkpoint blob too short for parameter '" + name + "'");
        std::vector<double> data(blob.begin() + static_cast<std::ptrdiff_t>(offset),
                                 blob.begin() + static_cast<std::ptrdiff_t>(offset + count));
        Tensor t = Tensor::from_data(shape, std::move(data));
        t.set_requires_grad(true);
        out.params.emplace(name, std::move(t));
    }
    return out;
}

void restore_params(ParameterSet& params, const LoadedCheckpoint& ckpt) {
    for (auto& [name, t] : params) {
        auto it = ckpt.params.find(name);
        if (it == ckpt.params.end())
            throw IoError("checkpoint missing parameter '" + name + "'");
        if (it->second.shape() != t.shape())
            throw DimensionError("checkpoint parameter '" + name + "' has shape " +
                                 shape_str(it->second.shape()) + ", expected " +
                                 shape_str(t.shape()));
        std::copy(it->second.data().begin(), it->second.data().end(), t.data().begin());
    }
}

}  // namespace pf
