#include "paintdet/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "paintdet/errors.hpp"

namespace paintdet {

static constexpr char kMagic[4] = {'G', 'D', 'C', 'K'};
static constexpr uint32_t kVersion = 1;

void save_checkpoint(const std::string& path, UNet& model) {
    nlohmann::json meta;
    const UNetConfig& c = model.config();
    meta["arch"] = {{"in_channels", c.in_channels},   {"out_channels", c.out_channels},
                    {"base_width", c.base_width},     {"channel_mult", c.channel_mult},
                    {"res_blocks", c.res_blocks},     {"embed_dim", c.embed_dim},
                    {"groups", c.groups}};
    meta["tensors"] = nlohmann::json::array();
    for (Param* p : model.params())
        meta["tensors"].push_back({{"name", p->name}, {"shape", p->value.shape}});
    const std::string js = meta.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("save_checkpoint: cannot open " + path);
    f.write(kMagic, 4);
    const uint32_t ver = kVersion;
    f.write(reinterpret_cast<const char*>(&ver), 4);
    const uint64_t len = js.size();
    f.write(reinterpret_cast<const char*>(&len), 8);
    f.write(js.data(), std::streamsize(js.size()));
    for (Param* p : model.params())
        f.write(reinterpret_cast<const char*>(p->value.data.data()),
                std::streamsize(p->value.numel() * sizeof(float)));
    if (!f) throw DataError("save_checkpoint: write failed for " + path);
}

std::unique_ptr<UNet> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_checkpoint: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("load_checkpoint: " + path + " is not a GDCK checkpoint");
    uint32_t ver = 0;
    f.read(reinterpret_cast<char*>(&ver), 4);
    if (ver != kVersion)
        throw DataError("load_checkpoint: unsupported version " + std::to_string(ver));
    uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 8);
    std::string js(len, '\0');
    f.read(js.data(), std::streamsize(len));
    if (!f) throw DataError("load_checkpoint: truncated metadata in " + path);

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(js);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("load_checkpoint: bad metadata JSON: " + std::string(e.what()));
    }
    UNetConfig cfg;
    const auto& a = meta.at("arch");
    cfg.in_channels = a.at("in_channels");
    cfg.out_channels = a.at("out_channels");
    cfg.base_width = a.at("base_width");
    cfg.channel_mult = a.at("channel_mult").get<std::vector<int>>();
    cfg.res_blocks = a.at("res_blocks");
    cfg.embed_dim = a.at("embed_dim");
    cfg.groups = a.at("groups");

    auto model = std::make_unique<UNet>(cfg);
    auto params = model->params();
    const auto& manifest = meta.at("tensors");
    if (manifest.size() != params.size())
        throw DataError("load_checkpoint: manifest has " + std::to_string(manifest.size()) +
                        " tensors, model expects " + std::to_string(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        const std::string name = manifest[i].at("name");
        const auto shape = manifest[i].at("shape").get<std::vector<int>>();
        if (name != params[i]->name || shape != params[i]->value.shape)
            throw DataError("load_checkpoint: tensor " + std::to_string(i) + " (" + name +
                            ") does not match model tensor " + params[i]->name);
        f.read(reinterpret_cast<char*>(params[i]->value.data.data()),
               std::streamsize(params[i]->value.numel() * sizeof(float)));
        if (!f) throw DataError("load_checkpoint: truncated payload at " + name);
    }
    return model;
}

}  // namespace paintdet
