#pragma once

#include "pclnet/bridges.hpp"
#include "pclnet/kernel_baselines.hpp"
#include "pclnet/serialize.hpp"

#include <fstream>

namespace pclnet::ckpt {

using nlohmann::json;

// ---------------------------------------------------------------------------
// config (de)serialization
// ---------------------------------------------------------------------------

inline json to_json(const FeatArch& a) {
    return {{"widths", a.widths}, {"ln", a.ln},       {"bn", a.bn},
            {"act", a.act == Act::Gelu ? "gelu" : (a.act == Act::Relu ? "relu" : "none")},
            {"dropout", a.dropout},  {"last_act", a.last_act}};
}

inline FeatArch arch_from_json(const json& j) {
    FeatArch a;
    a.widths = j.at("widths").get<std::vector<int>>();
    a.ln = j.at("ln").get<bool>();
    a.bn = j.at("bn").get<bool>();
    std::string act = j.at("act").get<std::string>();
    a.act = act == "gelu" ? Act::Gelu : (act == "relu" ? Act::Relu : Act::None);
    a.dropout = j.at("dropout").get<double>();
    a.last_act = j.at("last_act").get<bool>();
    return a;
}

inline json to_json(const Anneal& a) {
    return {{"start", a.start}, {"end", a.end},
            {"kind", a.kind == AnnealKind::Exponential ? "exp" : "linear"}};
}

inline Anneal anneal_from_json(const json& j) {
    return {j.at("start").get<double>(), j.at("end").get<double>(),
            j.at("kind").get<std::string>() == "exp" ? AnnealKind::Exponential : AnnealKind::Linear};
}

inline json to_json(const BridgeHyper& h) {
    return {{"lr1", h.lr1},         {"lr2", h.lr2},
            {"weight_decay", h.weight_decay},
            {"lam1", to_json(h.lam1)}, {"lam_aux", to_json(h.lam_aux)}, {"lam2", to_json(h.lam2)},
            {"t1", h.t1},           {"t2", h.t2},
            {"k_head", h.k_head},   {"epochs", h.epochs},
            {"batch1", h.batch1},   {"batch2", h.batch2},
            {"loss", to_string(h.loss.kind)}, {"huber_delta", h.loss.huber_delta},
            {"head_lbfgs_lr", h.head_lbfgs_lr}};
}

inline BridgeHyper hyper_from_json(const json& j) {
    BridgeHyper h;
    h.lr1 = j.at("lr1").get<double>();
    h.lr2 = j.at("lr2").get<double>();
    h.weight_decay = j.at("weight_decay").get<double>();
    h.lam1 = anneal_from_json(j.at("lam1"));
    h.lam_aux = anneal_from_json(j.at("lam_aux"));
    h.lam2 = anneal_from_json(j.at("lam2"));
    h.t1 = j.at("t1").get<int>();
    h.t2 = j.at("t2").get<int>();
    h.k_head = j.at("k_head").get<int>();
    h.epochs = j.at("epochs").get<int>();
    h.batch1 = j.at("batch1").get<int>();
    h.batch2 = j.at("batch2").get<int>();
    h.loss.kind = loss_kind_from_string(j.at("loss").get<std::string>());
    h.loss.huber_delta = j.at("huber_delta").get<double>();
    h.head_lbfgs_lr = j.at("head_lbfgs_lr").get<double>();
    return h;
}

inline json to_json(const RegressorConfig& c) {
    return {{"hidden", c.hidden},
            {"dropout", c.dropout},
            {"lr", c.lr},
            {"weight_decay", c.weight_decay},
            {"epochs", c.epochs},
            {"batch", c.batch},
            {"seed", c.seed},
            {"mode", c.mode == RegressorConfig::Mode::MlpAdamW ? "mlp" : "ridge"},
            {"ridge_lambda", c.ridge_lambda}};
}

inline RegressorConfig regressor_config_from_json(const json& j) {
    RegressorConfig c;
    c.hidden = j.at("hidden").get<std::vector<int>>();
    c.dropout = j.at("dropout").get<double>();
    c.lr = j.at("lr").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.batch = j.at("batch").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.mode = j.at("mode").get<std::string>() == "mlp" ? RegressorConfig::Mode::MlpAdamW
                                                      : RegressorConfig::Mode::RidgeFixedFeatures;
    c.ridge_lambda = j.at("ridge_lambda").get<double>();
    return c;
}

inline void add_featurizer(Blob& blob, const std::string& prefix, Featurizer& f) {
    for (auto& [name, mat] : f.state_entries()) blob.add(prefix + "." + name, *mat);
}

inline void load_featurizer(const Blob& blob, const std::string& prefix, Featurizer& f) {
    auto entries = f.state_entries();
    for (auto& [name, mat] : entries) *mat = blob.get(prefix + "." + name);
    f.sync_bn_from_state_entries();
}

inline json scaler_to_json(const Scaler& s) {
    std::vector<double> mean(s.mean.data(), s.mean.data() + s.mean.size());
    std::vector<double> inv(s.inv_sd.data(), s.inv_sd.data() + s.inv_sd.size());
    return {{"mean", mean}, {"inv_sd", inv}};
}

inline Scaler scaler_from_json(const json& j) {
    Scaler s;
    auto mean = j.at("mean").get<std::vector<double>>();
    auto inv = j.at("inv_sd").get<std::vector<double>>();
    s.mean = Eigen::Map<Eigen::RowVectorXd>(mean.data(), static_cast<long>(mean.size()));
    s.inv_sd = Eigen::Map<Eigen::RowVectorXd>(inv.data(), static_cast<long>(inv.size()));
    return s;
}


// ---------------------------------------------------------------------------
// model save / load
// ---------------------------------------------------------------------------

inline json outcome_config_to_json(const OutcomeBridgeConfig& c) {
    return {{"stage1", to_json(c.stage1)}, {"feat_a", to_json(c.feat_a)},
            {"feat_x", to_json(c.feat_x)}, {"feat_v", to_json(c.feat_v)},
            {"feat_s", to_json(c.feat_s)}, {"feat_w", to_json(c.feat_w)},
            {"hyper", to_json(c.hyper)},   {"seed", c.seed}};
}

inline OutcomeBridgeConfig outcome_config_from_json(const json& j) {
    OutcomeBridgeConfig c;
    c.stage1 = arch_from_json(j.at("stage1"));
    c.feat_a = arch_from_json(j.at("feat_a"));
    c.feat_x = arch_from_json(j.at("feat_x"));
    c.feat_v = arch_from_json(j.at("feat_v"));
    c.feat_s = arch_from_json(j.at("feat_s"));
    c.feat_w = arch_from_json(j.at("feat_w"));
    c.hyper = hyper_from_json(j.at("hyper"));
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline json treatment_config_to_json(const TreatmentBridgeConfig& c) {
    return {{"stage1", to_json(c.stage1)}, {"feat_ax", to_json(c.feat_ax)},
            {"feat_z", to_json(c.feat_z)}, {"hyper", to_json(c.hyper)},
            {"winsor_pct", c.winsor_pct},  {"seed", c.seed}};
}

inline TreatmentBridgeConfig treatment_config_from_json(const json& j) {
    TreatmentBridgeConfig c;
    c.stage1 = arch_from_json(j.at("stage1"));
    c.feat_ax = arch_from_json(j.at("feat_ax"));
    c.feat_z = arch_from_json(j.at("feat_z"));
    c.hyper = hyper_from_json(j.at("hyper"));
    c.winsor_pct = j.at("winsor_pct").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline void core_to_blob(TwoStageCore& core, Blob& blob) {
    add_featurizer(blob, "stage1", core.stage1_featurizer());
    for (std::size_t k = 0; k < core.left_count(); ++k)
        add_featurizer(blob, "left" + std::to_string(k), core.left_featurizer(k));
    add_featurizer(blob, "target", core.target_featurizer());
    blob.add("vhat", core.vhat());
    blob.add("head", Mat(core.head()));
}

inline void core_from_blob(TwoStageCore& core, const Blob& blob) {
    load_featurizer(blob, "stage1", core.stage1_featurizer());
    for (std::size_t k = 0; k < core.left_count(); ++k)
        load_featurizer(blob, "left" + std::to_string(k), core.left_featurizer(k));
    load_featurizer(blob, "target", core.target_featurizer());
    core.vhat_mutable() = blob.get("vhat");
    core.set_head(Vec(blob.get("head").col(0)));
}

inline std::uint64_t save_outcome_bridge(OutcomeBridge& m, const std::string& base_path) {
    auto meta = m.export_meta();
    json manifest;
    manifest["component"] = "outcome-bridge";
    manifest["config"] = outcome_config_to_json(m.config());
    manifest["meta"] = {{"has_v", meta.has_v},     {"has_s", meta.has_s},
                        {"has_x", meta.has_x},     {"a_mean", meta.a_mean},
                        {"a_inv_sd", meta.a_inv_sd}, {"y_sd", meta.y_sd},
                        {"x_sc", scaler_to_json(meta.x_sc)}, {"v_sc", scaler_to_json(meta.v_sc)},
                        {"s_sc", scaler_to_json(meta.s_sc)}, {"z_sc", scaler_to_json(meta.z_sc)},
                        {"w_sc", scaler_to_json(meta.w_sc)}, {"in1_dim", meta.in1_dim},
                        {"left_dims", meta.left_dims},       {"target_dim", meta.target_dim}};
    Blob blob;
    core_to_blob(m.core(), blob);
    return write_checkpoint(base_path, std::move(manifest), blob);
}

inline OutcomeBridge load_outcome_bridge(const std::string& base_path) {
    auto [manifest, blob] = read_checkpoint(base_path);
    if (manifest.at("component") != "outcome-bridge")
        throw DataError("checkpoint is not an outcome bridge: " + base_path);
    OutcomeBridge m(outcome_config_from_json(manifest.at("config")));
    const json& mj = manifest.at("meta");
    OutcomeBridge::Meta meta;
    meta.has_v = mj.at("has_v").get<bool>();
    meta.has_s = mj.at("has_s").get<bool>();
    meta.has_x = mj.at("has_x").get<bool>();
    meta.a_mean = mj.at("a_mean").get<double>();
    meta.a_inv_sd = mj.at("a_inv_sd").get<double>();
    meta.y_sd = mj.at("y_sd").get<double>();
    meta.x_sc = scaler_from_json(mj.at("x_sc"));
    meta.v_sc = scaler_from_json(mj.at("v_sc"));
    meta.s_sc = scaler_from_json(mj.at("s_sc"));
    meta.z_sc = scaler_from_json(mj.at("z_sc"));
    meta.w_sc = scaler_from_json(mj.at("w_sc"));
    meta.in1_dim = mj.at("in1_dim").get<int>();
    meta.left_dims = mj.at("left_dims").get<std::vector<int>>();
    meta.target_dim = mj.at("target_dim").get<int>();
    m.import_meta(meta);
    core_from_blob(m.core(), blob);
    return m;
}

inline std::uint64_t save_treatment_bridge(TreatmentBridge& m, const std::string& base_path) {
    auto meta = m.export_meta();
    json manifest;
    manifest["component"] = "treatment-bridge";
    manifest["config"] = treatment_config_to_json(m.config());
    manifest["meta"] = {{"has_x", meta.has_x},   {"a_mean", meta.a_mean},
                        {"a_inv_sd", meta.a_inv_sd},
                        {"x_sc", scaler_to_json(meta.x_sc)}, {"z_sc", scaler_to_json(meta.z_sc)},
                        {"w_sc", scaler_to_json(meta.w_sc)}, {"in1_dim", meta.in1_dim},
                        {"ax_dim", meta.ax_dim}, {"target_dim", meta.target_dim}};
    Blob blob;
    core_to_blob(m.core(), blob);
    return write_checkpoint(base_path, std::move(manifest), blob);
}

inline TreatmentBridge load_treatment_bridge(const std::string& base_path) {
    auto [manifest, blob] = read_checkpoint(base_path);
    if (manifest.at("component") != "treatment-bridge")
        throw DataError("checkpoint is not a treatment bridge: " + base_path);
    TreatmentBridge m(treatment_config_from_json(manifest.at("config")));
    const json& mj = manifest.at("meta");
    TreatmentBridge::Meta meta;
    meta.has_x = mj.at("has_x").get<bool>();
    meta.a_mean = mj.at("a_mean").get<double>();
    meta.a_inv_sd = mj.at("a_inv_sd").get<double>();
    meta.x_sc = scaler_from_json(mj.at("x_sc"));
    meta.z_sc = scaler_from_json(mj.at("z_sc"));
    meta.w_sc = scaler_from_json(mj.at("w_sc"));
    meta.in1_dim = mj.at("in1_dim").get<int>();
    meta.ax_dim = mj.at("ax_dim").get<int>();
    meta.target_dim = mj.at("target_dim").get<int>();
    m.import_meta(meta);
    core_from_blob(m.core(), blob);
    return m;
}

inline void regressor_to_state(Regressor& r, json& manifest, Blob& blob,
                               const std::string& prefix) {
    manifest[prefix + "_config"] = to_json(r.config());
    manifest[prefix + "_in"] = r.in_dim();
    manifest[prefix + "_out"] = r.out_dim();
    manifest[prefix + "_x_sc"] = scaler_to_json(r.x_scaler());
    std::vector<double> ym(r.y_mean().data(), r.y_mean().data() + r.y_mean().size());
    std::vector<double> ys(r.y_sd().data(), r.y_sd().data() + r.y_sd().size());
    manifest[prefix + "_y_mean"] = ym;
    manifest[prefix + "_y_sd"] = ys;
    add_featurizer(blob, prefix + ".net", r.net());
    if (r.ridge_w().size() > 0) blob.add(prefix + ".ridge_w", r.ridge_w());
}

inline Regressor regressor_from_state(const json& manifest, const Blob& blob,
                                      const std::string& prefix) {
    Regressor r(regressor_config_from_json(manifest.at(prefix + "_config")),
                manifest.at(prefix + "_in").get<int>(), manifest.at(prefix + "_out").get<int>(),
                prefix);
    r.x_scaler() = scaler_from_json(manifest.at(prefix + "_x_sc"));
    auto ym = manifest.at(prefix + "_y_mean").get<std::vector<double>>();
    auto ys = manifest.at(prefix + "_y_sd").get<std::vector<double>>();
    r.y_mean() = Eigen::Map<Eigen::RowVectorXd>(ym.data(), static_cast<long>(ym.size()));
    r.y_sd() = Eigen::Map<Eigen::RowVectorXd>(ys.data(), static_cast<long>(ys.size()));
    load_featurizer(blob, prefix + ".net", r.net());
    if (r.config().mode == RegressorConfig::Mode::RidgeFixedFeatures)
        r.ridge_w() = blob.get(prefix + ".ridge_w");
    r.fitted_flag() = true;
    return r;
}

inline std::uint64_t save_regressor(Regressor& r, const std::string& base_path,
                                    const std::string& component) {
    json manifest;
    manifest["component"] = component;
    Blob blob;
    regressor_to_state(r, manifest, blob, "reg");
    return write_checkpoint(base_path, std::move(manifest), blob);
}

inline Regressor load_regressor(const std::string& base_path) {
    auto [manifest, blob] = read_checkpoint(base_path);
    return regressor_from_state(manifest, blob, "reg");
}

inline std::uint64_t save_kpv(const kernel::KpvModel& m, const std::string& base_path) {
    json manifest;
    Blob blob;
    m.save_state(manifest, blob);
    return write_checkpoint(base_path, std::move(manifest), blob);
}

inline kernel::KpvModel load_kpv(const std::string& base_path) {
    auto [manifest, blob] = read_checkpoint(base_path);
    return kernel::KpvModel::load_state(manifest, blob);
}

inline std::uint64_t save_kap(const kernel::KapModel& m, const std::string& base_path) {
    json manifest;
    Blob blob;
    m.save_state(manifest, blob);
    return write_checkpoint(base_path, std::move(manifest), blob);
}

inline kernel::KapModel load_kap(const std::string& base_path) {
    auto [manifest, blob] = read_checkpoint(base_path);
    return kernel::KapModel::load_state(manifest, blob);
}

} // namespace pclnet::ckpt
