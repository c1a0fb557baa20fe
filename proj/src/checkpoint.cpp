#include "occudiff/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace occudiff {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json arch_to_json(const UnetConfig& a) {
    return json{{"dim", a.dim},
                {"width1", a.width1},
                {"width2", a.width2},
                {"time_dim", a.time_dim},
                {"cond_dim", a.cond_dim},
                {"point_hidden", a.point_hidden},
                {"gn_groups", a.gn_groups},
                {"T", a.T}};
}

UnetConfig arch_from_json(const json& j) {
    UnetConfig a;
    a.dim = j.at("dim").get<int>();
    a.width1 = j.at("width1").get<int>();
    a.width2 = j.at("width2").get<int>();
    a.time_dim = j.at("time_dim").get<int>();
    a.cond_dim = j.at("cond_dim").get<int>();
    a.point_hidden = j.at("point_hidden").get<int>();
    a.gn_groups = j.at("gn_groups").get<int>();
    a.T = j.at("T").get<int>();
    return a;
}

json train_to_json(const TrainConfig& t) {
    return json{{"batch_size", t.batch_size},
                {"epochs", t.epochs},
                {"dropout", t.dropout},
                {"warmup_steps", t.warmup_steps},
                {"lr_min", t.lr_min},
                {"lr_max", t.lr_max},
                {"total_steps", t.total_steps},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"adam_eps", t.adam_eps},
                {"seed", t.seed},
                {"predict_x0", t.predict_x0}};
}

TrainConfig train_from_json(const json& j) {
    TrainConfig t;
    t.batch_size = j.at("batch_size").get<int>();
    t.epochs = j.at("epochs").get<int>();
    t.dropout = j.at("dropout").get<double>();
    t.warmup_steps = j.at("warmup_steps").get<int>();
    t.lr_min = j.at("lr_min").get<double>();
    t.lr_max = j.at("lr_max").get<double>();
    t.total_steps = j.at("total_steps").get<long>();
    t.beta1 = j.at("beta1").get<double>();
    t.beta2 = j.at("beta2").get<double>();
    t.adam_eps = j.at("adam_eps").get<double>();
    t.seed = j.at("seed").get<uint64_t>();
    t.predict_x0 = j.at("predict_x0").get<bool>();
    return t;
}

json manifest_path_load(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "manifest.json");
    if (!is) throw std::runtime_error("checkpoint: cannot open manifest in " + dir);
    json j;
    is >> j;
    return j;
}

}  // namespace

void save_checkpoint(const std::string& dir, const Denoiser<float>& model,
                     const CheckpointMeta& meta, const AdamState* adam) {
    fs::create_directories(dir);

    json tensors = json::array();
    for (const TensorInfo& ti : model.params().infos()) {
        tensors.push_back({{"name", ti.name},
                           {"rows", ti.rows},
                           {"cols", ti.cols},
                           {"offset", ti.offset}});
    }
    json manifest{{"format", "occudiff-checkpoint-v1"},
                  {"arch", arch_to_json(meta.arch)},
                  {"tensors", tensors},
                  {"train", train_to_json(meta.train)},
                  {"progress", {{"epoch", meta.epoch}, {"global_step", meta.global_step}}}};
    {
        std::ofstream os(fs::path(dir) / "manifest.json");
        if (!os) throw std::runtime_error("checkpoint: cannot write manifest in " + dir);
        os << manifest.dump(2) << "\n";
        if (!os) throw std::runtime_error("checkpoint: manifest write failed in " + dir);
    }
    {
        std::ofstream os(fs::path(dir) / "weights.bin", std::ios::binary);
        if (!os) throw std::runtime_error("checkpoint: cannot write weights in " + dir);
        const VecX<float>& theta = model.params().theta();
        os.write(reinterpret_cast<const char*>(theta.data()),
                 static_cast<std::streamsize>(sizeof(float) * theta.size()));
        if (!os) throw std::runtime_error("checkpoint: weights write failed in " + dir);
    }
    if (adam) {
        if (adam->m.size() != model.param_count()) {
            throw std::invalid_argument("checkpoint: optimizer state size mismatch");
        }
        std::ofstream os(fs::path(dir) / "adam.bin", std::ios::binary);
        if (!os) throw std::runtime_error("checkpoint: cannot write optimizer state in " + dir);
        const uint64_t n = static_cast<uint64_t>(adam->m.size());
        const int64_t step = adam->step;
        os.write(reinterpret_cast<const char*>(&n), sizeof(n));
        os.write(reinterpret_cast<const char*>(&step), sizeof(step));
        os.write(reinterpret_cast<const char*>(adam->m.data()),
                 static_cast<std::streamsize>(sizeof(double) * adam->m.size()));
        os.write(reinterpret_cast<const char*>(adam->v.data()),
                 static_cast<std::streamsize>(sizeof(double) * adam->v.size()));
        if (!os) throw std::runtime_error("checkpoint: optimizer write failed in " + dir);
    }
}

CheckpointMeta read_checkpoint_meta(const std::string& dir) {
    json j = manifest_path_load(dir);
    if (j.at("format").get<std::string>() != "occudiff-checkpoint-v1") {
        throw std::runtime_error("checkpoint: unknown format in " + dir);
    }
    CheckpointMeta meta;
    meta.arch = arch_from_json(j.at("arch"));
    meta.train = train_from_json(j.at("train"));
    meta.epoch = j.at("progress").at("epoch").get<int>();
    meta.global_step = j.at("progress").at("global_step").get<long>();
    return meta;
}

Denoiser<float> load_checkpoint(const std::string& dir, CheckpointMeta* meta_out,
                                AdamState* adam) {
    json j = manifest_path_load(dir);
    CheckpointMeta meta = read_checkpoint_meta(dir);
    Denoiser<float> model(meta.arch);

    const json& tensors = j.at("tensors");
    const auto& infos = model.params().infos();
    if (tensors.size() != infos.size()) {
        throw std::runtime_error("checkpoint: tensor registry size mismatch in " + dir);
    }
    for (size_t i = 0; i < infos.size(); ++i) {
        const json& t = tensors[i];
        if (t.at("name").get<std::string>() != infos[i].name ||
            t.at("rows").get<Eigen::Index>() != infos[i].rows ||
            t.at("cols").get<Eigen::Index>() != infos[i].cols ||
            t.at("offset").get<Eigen::Index>() != infos[i].offset) {
            throw std::runtime_error("checkpoint: tensor registry mismatch at '" + infos[i].name +
                                     "' in " + dir);
        }
    }

    {
        const fs::path wpath = fs::path(dir) / "weights.bin";
        std::ifstream is(wpath, std::ios::binary);
        if (!is) throw std::runtime_error("checkpoint: cannot open weights in " + dir);
        const auto expected = static_cast<uintmax_t>(sizeof(float)) *
                              static_cast<uintmax_t>(model.param_count());
        if (fs::file_size(wpath) != expected) {
            throw std::runtime_error("checkpoint: weights size mismatch in " + dir);
        }
        VecX<float>& theta = model.params().theta();
        is.read(reinterpret_cast<char*>(theta.data()),
                static_cast<std::streamsize>(sizeof(float) * theta.size()));
        if (!is) throw std::runtime_error("checkpoint: truncated weights in " + dir);
    }

    if (adam) {
        std::ifstream is(fs::path(dir) / "adam.bin", std::ios::binary);
        if (!is) throw std::runtime_error("checkpoint: cannot open optimizer state in " + dir);
        uint64_t n = 0;
        int64_t step = 0;
        is.read(reinterpret_cast<char*>(&n), sizeof(n));
        is.read(reinterpret_cast<char*>(&step), sizeof(step));
        if (!is || n != static_cast<uint64_t>(model.param_count())) {
            throw std::runtime_error("checkpoint: optimizer state mismatch in " + dir);
        }
        adam->init(model.param_count());
        adam->step = step;
        is.read(reinterpret_cast<char*>(adam->m.data()),
                static_cast<std::streamsize>(sizeof(double) * adam->m.size()));
        is.read(reinterpret_cast<char*>(adam->v.data()),
                static_cast<std::streamsize>(sizeof(double) * adam->v.size()));
        if (!is) throw std::runtime_error("checkpoint: truncated optimizer state in " + dir);
    }

    if (meta_out) *meta_out = meta;
    return model;
}

}  // namespace occudiff
