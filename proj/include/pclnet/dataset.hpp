#pragma once

#include "pclnet/common.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

namespace pclnet {

// Columnar sample table. Covariates may be absent (x has zero columns), or
// split into a heterogeneity block v and the remaining block s, in which case
// x is their concatenation [v s].
struct Dataset {
    Vec a;
    Vec y;
    Mat z;
    Mat w;
    Mat v; // zero cols unless the benchmark has a heterogeneity variable
    Mat s;
    Mat x_plain; // covariates without a v/s split
    std::string benchmark;
    std::uint64_t seed = 0;

    long n() const { return a.size(); }
    bool has_v() const { return v.cols() > 0; }
    bool has_x() const { return x_plain.cols() > 0 || v.cols() > 0 || s.cols() > 0; }

    Mat x() const {
        if (x_plain.cols() > 0) return x_plain;
        Mat out(n(), v.cols() + s.cols());
        if (v.cols() > 0) out.leftCols(v.cols()) = v;
        if (s.cols() > 0) out.rightCols(s.cols()) = s;
        return out;
    }

    void validate() const {
        const long rows = n();
        require(y.size() == rows && z.rows() == rows && w.rows() == rows, "dataset: column length mismatch");
        if (v.cols() > 0) require(v.rows() == rows, "dataset: v length mismatch");
        if (s.cols() > 0) require(s.rows() == rows, "dataset: s length mismatch");
        if (x_plain.cols() > 0) require(x_plain.rows() == rows, "dataset: x length mismatch");
        if (x_plain.cols() > 0 && v.cols() > 0)
            throw DataError("dataset: x and v/s blocks are mutually exclusive");
        auto finite = [](const auto& m) { return m.allFinite(); };
        if (!(finite(a) && finite(y) && finite(z) && finite(w) && finite(v) && finite(s) &&
              finite(x_plain)))
            throw DataError("dataset: non-finite entries");
    }

    Dataset rows(const std::vector<int>& idx) const {
        Dataset out;
        out.benchmark = benchmark;
        out.seed = seed;
        auto take_vec = [&](const Vec& src) {
            Vec d(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) d(i) = src(idx[i]);
            return d;
        };
        auto take_mat = [&](const Mat& src) {
            Mat d(static_cast<long>(idx.size()), src.cols());
            for (std::size_t i = 0; i < idx.size(); ++i) d.row(i) = src.row(idx[i]);
            return d;
        };
        out.a = take_vec(a);
        out.y = take_vec(y);
        out.z = take_mat(z);
        out.w = take_mat(w);
        out.v = take_mat(v);
        out.s = take_mat(s);
        out.x_plain = take_mat(x_plain);
        return out;
    }
};

// Disjoint fold indices for two-stage training. The evaluation sample for the
// averaging/correction stages defaults to the stage-2 fold.
struct SplitPlan {
    std::vector<int> d1;
    std::vector<int> d2;
    std::vector<int> d3; // defaults to d2

    static SplitPlan halves(long n) {
        SplitPlan p;
        long half = n / 2;
        p.d1.resize(half);
        std::iota(p.d1.begin(), p.d1.end(), 0);
        p.d2.resize(n - half);
        std::iota(p.d2.begin(), p.d2.end(), static_cast<int>(half));
        p.d3 = p.d2;
        return p;
    }

    void validate(long n) const {
        if (d1.empty() || d2.empty()) throw ConfigError("split plan: empty split");
        for (const auto* split : {&d1, &d2, &d3})
            for (int i : *split)
                if (i < 0 || i >= n) throw ConfigError("split plan: index out of bounds");
    }
};

// ---------------------------------------------------------------------------
// CSV + JSON sidecar persistence
// ---------------------------------------------------------------------------

namespace detail {
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
} // namespace detail

inline void write_dataset_csv(const Dataset& d, const std::string& csv_path,
                              const std::string& sidecar_path) {
    std::ofstream f(csv_path, std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + csv_path);
    f << "a,y";
    for (long j = 0; j < d.z.cols(); ++j) f << ",z" << (j + 1);
    for (long j = 0; j < d.w.cols(); ++j) f << ",w" << (j + 1);
    for (long j = 0; j < d.x_plain.cols(); ++j) f << ",x" << (j + 1);
    for (long j = 0; j < d.v.cols(); ++j) f << (d.v.cols() == 1 ? std::string(",v") : ",v" + std::to_string(j + 1));
    for (long j = 0; j < d.s.cols(); ++j) f << ",s" << (j + 1);
    f << "\n";
    for (long i = 0; i < d.n(); ++i) {
        f << detail::fmt_double(d.a(i)) << ',' << detail::fmt_double(d.y(i));
        for (long j = 0; j < d.z.cols(); ++j) f << ',' << detail::fmt_double(d.z(i, j));
        for (long j = 0; j < d.w.cols(); ++j) f << ',' << detail::fmt_double(d.w(i, j));
        for (long j = 0; j < d.x_plain.cols(); ++j) f << ',' << detail::fmt_double(d.x_plain(i, j));
        for (long j = 0; j < d.v.cols(); ++j) f << ',' << detail::fmt_double(d.v(i, j));
        for (long j = 0; j < d.s.cols(); ++j) f << ',' << detail::fmt_double(d.s(i, j));
        f << "\n";
    }
    nlohmann::json side;
    side["benchmark"] = d.benchmark;
    side["seed"] = d.seed;
    side["N"] = d.n();
    side["dims"] = {{"z", d.z.cols()}, {"w", d.w.cols()}, {"x", d.x_plain.cols()},
                    {"v", d.v.cols()}, {"s", d.s.cols()}};
    std::ofstream sf(sidecar_path, std::ios::binary);
    if (!sf) throw DataError("cannot open for writing: " + sidecar_path);
    sf << side.dump(2) << "\n";
}

inline Dataset load_dataset_csv(const std::string& csv_path, const std::string& sidecar_path) {
    std::ifstream sf(sidecar_path);
    if (!sf) throw DataError("cannot open sidecar: " + sidecar_path);
    nlohmann::json side = nlohmann::json::parse(sf);

    std::ifstream f(csv_path);
    if (!f) throw DataError("cannot open csv: " + csv_path);
    std::string header;
    std::getline(f, header);

    const long n = side.at("N").get<long>();
    const long dz = side.at("dims").at("z").get<long>();
    const long dw = side.at("dims").at("w").get<long>();
    const long dx = side.at("dims").at("x").get<long>();
    const long dv = side.at("dims").at("v").get<long>();
    const long ds = side.at("dims").at("s").get<long>();

    Dataset d;
    d.benchmark = side.at("benchmark").get<std::string>();
    d.seed = side.at("seed").get<std::uint64_t>();
    d.a.resize(n);
    d.y.resize(n);
    d.z.resize(n, dz);
    d.w.resize(n, dw);
    d.x_plain.resize(n, dx);
    d.v.resize(n, dv);
    d.s.resize(n, ds);

    std::string line;
    for (long i = 0; i < n; ++i) {
        if (!std::getline(f, line)) throw DataError("csv shorter than sidecar N");
        std::vector<double> cells;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            std::size_t comma = line.find(',', pos);
            std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            cells.push_back(std::stod(cell));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (static_cast<long>(cells.size()) != 2 + dz + dw + dx + dv + ds)
            throw DataError("csv row " + std::to_string(i) + " has wrong arity");
        std::size_t k = 0;
        d.a(i) = cells[k++];
        d.y(i) = cells[k++];
        for (long j = 0; j < dz; ++j) d.z(i, j) = cells[k++];
        for (long j = 0; j < dw; ++j) d.w(i, j) = cells[k++];
        for (long j = 0; j < dx; ++j) d.x_plain(i, j) = cells[k++];
        for (long j = 0; j < dv; ++j) d.v(i, j) = cells[k++];
        for (long j = 0; j < ds; ++j) d.s(i, j) = cells[k++];
    }
    d.validate();
    return d;
}

// per-column affine scaler fit on a reference split
struct Scaler {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd inv_sd;

    static Scaler fit(const Mat& ref) {
        Scaler s;
        s.mean = ref.colwise().mean();
        Eigen::RowVectorXd var = (ref.rowwise() - s.mean).array().square().colwise().mean();
        s.inv_sd = (var.array() + 1e-12).rsqrt();
        return s;
    }

    Mat apply(const Mat& m) const {
        require(m.cols() == mean.size(), "scaler: column count mismatch");
        return ((m.rowwise() - mean).array().rowwise() * inv_sd.array()).matrix();
    }
};

} // namespace pclnet
