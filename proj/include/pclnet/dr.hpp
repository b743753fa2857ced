#pragma once

#include "pclnet/bridges.hpp"

namespace pclnet {

// head <- head + |eps|, eps ~ N(0, sigma^2) entrywise; the original model is
// untouched, callers install the returned head on a copy or via set_head
inline Vec perturbed_head(const Vec& head, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw ConfigError("perturb_head: sigma must be nonnegative");
    Rng rng(seed, 0x9e27);
    Vec out = head;
    for (long i = 0; i < out.size(); ++i) out(i) += std::abs(rng.normal(0.0, sigma));
    return out;
}

enum class DrVersion { V1, V2 };

// Doubly robust combiners. V1 regresses the bridge-weighted residual
// phi (y - h) on the treatment; V2 regresses the interaction phi * h and
// reuses the treatment-bridge third-stage curve.
struct DrAte {
    DrVersion version = DrVersion::V1;
    Regressor correction;
    DoseResponseCurve outcome_curve;
    DoseResponseCurve treatment_curve; // V2 only

    DoseResponseCurve curve(const std::vector<double>& grid) {
        require(grid == outcome_curve.grid_a, "dr curve: grid mismatch with the outcome curve");
        Mat g(grid.size(), 1);
        for (std::size_t i = 0; i < grid.size(); ++i) g(i, 0) = grid[i];
        Vec k = correction.predict(g).col(0);
        DoseResponseCurve c;
        c.grid_a = grid;
        c.tag = version == DrVersion::V1 ? "drpclnet-v1" : "drpclnet-v2";
        for (std::size_t i = 0; i < grid.size(); ++i) {
            double v = version == DrVersion::V1
                           ? outcome_curve.values[i] + k(i)
                           : outcome_curve.values[i] + treatment_curve.values[i] - k(i);
            c.values.push_back(v);
        }
        return c;
    }
};

inline DrAte fit_dr_ate(OutcomeBridge& h, TreatmentBridge& phi, const Dataset& d,
                        const std::vector<int>& rows, RegressorConfig rc, DrVersion version,
                        const std::vector<double>& grid,
                        const DoseResponseCurve* treatment_curve = nullptr) {
    if (!h.fitted() || !phi.fitted()) throw StateError("fit_dr_ate: bridges must be fitted");
    Dataset de = d.rows(rows);
    Vec h_vals, phi_vals;
    try {
        h_vals = h.eval_h_rows(de.a, de.x(), de.w);
        phi_vals = phi.eval_phi_rows(de.a, de.x(), de.z);
    } catch (const ShapeError& e) {
        throw ConfigError(std::string("fit_dr_ate: bridge/dataset schema mismatch: ") + e.what());
    }
    Vec pseudo = version == DrVersion::V1
                     ? Vec(phi_vals.cwiseProduct(de.y - h_vals))
                     : Vec(phi_vals.cwiseProduct(h_vals));
    DrAte dr;
    dr.version = version;
    dr.correction = Regressor(rc, 1, 1, version == DrVersion::V1 ? "dr-v1" : "dr-v2");
    Mat a_in(de.n(), 1);
    a_in.col(0) = de.a;
    Mat p(pseudo.size(), 1);
    p.col(0) = pseudo;
    dr.correction.fit(a_in, p);
    dr.outcome_curve = h.ate_curve(d, rows, grid);
    if (version == DrVersion::V2) {
        if (!treatment_curve) throw ConfigError("fit_dr_ate: V2 needs the treatment-bridge curve");
        dr.treatment_curve = *treatment_curve;
    }
    return dr;
}

// heterogeneous version: corrections regress on (a, v)
struct DrCate {
    DrVersion version = DrVersion::V1;
    Regressor correction;
    OutcomeBridge::CateEvaluator outcome_eval;
    TreatmentBridge::CateEvaluator treatment_eval; // V2 only

    double at(double a, double v) {
        Mat in(1, 2);
        in(0, 0) = a;
        in(0, 1) = v;
        double k = correction.predict(in)(0, 0);
        double base = outcome_eval.at(a, v);
        if (version == DrVersion::V1) return base + k;
        return base + treatment_eval.at(a, v) - k;
    }

    DoseResponseCurve curve(double a, const std::vector<double>& v_grid) {
        DoseResponseCurve c;
        c.grid_a.assign(v_grid.size(), a);
        c.grid_v = v_grid;
        c.tag = version == DrVersion::V1 ? "drpclnet-v1" : "drpclnet-v2";
        for (double v : v_grid) c.values.push_back(at(a, v));
        return c;
    }
};

inline DrCate fit_dr_cate(OutcomeBridge& h, TreatmentBridge& phi, const Dataset& d,
                          const std::vector<int>& rows, RegressorConfig rc_correction,
                          RegressorConfig rc_embed, RegressorConfig rc_treat, DrVersion version) {
    if (!h.fitted() || !phi.fitted()) throw StateError("fit_dr_cate: bridges must be fitted");
    if (!d.has_v()) throw ConfigError("fit_dr_cate: dataset has no V column");
    Dataset de = d.rows(rows);
    Vec h_vals = h.eval_h_rows(de.a, de.x(), de.w);
    Vec phi_vals = phi.eval_phi_rows(de.a, de.x(), de.z);
    Vec pseudo = version == DrVersion::V1
                     ? Vec(phi_vals.cwiseProduct(de.y - h_vals))
                     : Vec(phi_vals.cwiseProduct(h_vals));
    DrCate dr;
    dr.version = version;
    dr.correction = Regressor(rc_correction, 2, 1, "dr-cate");
    Mat in(de.n(), 2);
    in.col(0) = de.a;
    in.col(1) = de.v.col(0);
    Mat p(pseudo.size(), 1);
    p.col(0) = pseudo;
    dr.correction.fit(in, p);
    dr.outcome_eval = h.cate_regression(d, rows, rc_embed);
    if (version == DrVersion::V2) dr.treatment_eval = phi.cate_curve(d, rows, rc_treat);
    return dr;
}

// conditional version for a fixed anchor: corrections regress on a
struct DrAtt {
    DrVersion version = DrVersion::V1;
    double anchor = 0.0;
    Regressor correction;
    DoseResponseCurve outcome_curve;   // f_ATT^(h)(., anchor)
    DoseResponseCurve treatment_curve; // V2 only

    DoseResponseCurve curve(const std::vector<double>& grid) {
        require(grid == outcome_curve.grid_a, "dr att curve: grid mismatch");
        Mat g(grid.size(), 1);
        for (std::size_t i = 0; i < grid.size(); ++i) g(i, 0) = grid[i];
        Vec k = correction.predict(g).col(0);
        DoseResponseCurve c;
        c.grid_a = grid;
        c.anchor = anchor;
        c.has_anchor = true;
        c.tag = version == DrVersion::V1 ? "drpclnet-v1" : "drpclnet-v2";
        c.anchor_outside_support = outcome_curve.anchor_outside_support;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            double v = version == DrVersion::V1
                           ? outcome_curve.values[i] + k(i)
                           : outcome_curve.values[i] + treatment_curve.values[i] - k(i);
            c.values.push_back(v);
        }
        return c;
    }
};

inline DrAtt fit_dr_att(OutcomeBridge& h, OutcomeBridge::AttEvaluator& h_att,
                        TreatmentBridge& phi_anchor, const Dataset& d,
                        const std::vector<int>& rows, RegressorConfig rc, DrVersion version,
                        const std::vector<double>& grid, double anchor,
                        const DoseResponseCurve* treatment_curve = nullptr) {
    if (!h.fitted() || !phi_anchor.fitted()) throw StateError("fit_dr_att: bridges must be fitted");
    Dataset de = d.rows(rows);
    Vec h_vals = h.eval_h_rows(de.a, de.x(), de.w);
    Vec phi_vals = phi_anchor.eval_phi_rows(de.a, de.x(), de.z);
    Vec pseudo = version == DrVersion::V1
                     ? Vec(phi_vals.cwiseProduct(de.y - h_vals))
                     : Vec(phi_vals.cwiseProduct(h_vals));
    DrAtt dr;
    dr.version = version;
    dr.anchor = anchor;
    dr.correction = Regressor(rc, 1, 1, "dr-att");
    Mat a_in(de.n(), 1);
    a_in.col(0) = de.a;
    Mat p(pseudo.size(), 1);
    p.col(0) = pseudo;
    dr.correction.fit(a_in, p);
    dr.outcome_curve = h_att.curve(grid, anchor);
    if (version == DrVersion::V2) {
        if (!treatment_curve) throw ConfigError("fit_dr_att: V2 needs the treatment curve");
        dr.treatment_curve = *treatment_curve;
    }
    return dr;
}

} // namespace pclnet
