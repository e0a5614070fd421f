#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dmarket/error.hpp"
#include "dmarket/market_data.hpp"

namespace dmarket {

// Column-oriented data frame with numeric and categorical columns.
class DataTable {
public:
    using Numeric = std::vector<double>;
    using Categorical = std::vector<std::string>;
    using Column = std::variant<Numeric, Categorical>;

    std::size_t rows() const { return rows_; }

    DataTable& add(const std::string& name, Column col) {
        const auto n = std::visit([](const auto& v) { return v.size(); }, col);
        if (!columns_.empty() && n != rows_) throw InputError("column '" + name + "' has wrong length");
        rows_ = n;
        if (!columns_.count(name)) order_.push_back(name);
        columns_[name] = std::move(col);
        return *this;
    }

    bool has(const std::string& name) const { return columns_.count(name) > 0; }

    const Column& column(const std::string& name) const {
        auto it = columns_.find(name);
        if (it == columns_.end()) throw InputError("unknown column '" + name + "'");
        return it->second;
    }

    bool is_numeric(const std::string& name) const { return std::holds_alternative<Numeric>(column(name)); }

    const Numeric& numeric(const std::string& name) const {
        const auto* v = std::get_if<Numeric>(&column(name));
        if (!v) throw InputError("column '" + name + "' is not numeric");
        return *v;
    }

    // Categorical view of any column; numbers are formatted.
    Categorical labels(const std::string& name) const {
        const auto& c = column(name);
        if (const auto* s = std::get_if<Categorical>(&c)) return *s;
        Categorical out;
        for (double v : std::get<Numeric>(c)) out.push_back(csv::format_double(v));
        return out;
    }

    const std::vector<std::string>& names() const { return order_; }

private:
    std::size_t rows_ = 0;
    std::map<std::string, Column> columns_;
    std::vector<std::string> order_;
};

// One factor of a model term: a column raised to a power (numeric) or
// expanded to indicators (categorical).
struct Factor {
    std::string column;
    int power = 1;
};

using Term = std::vector<Factor>;

// Parses "gap + gap^2 + city + gap:city + gap^2:city". The intercept is
// implicit; include "0" or "-1" as a term to drop it.
struct Formula {
    std::vector<Term> terms;
    bool intercept = true;

    static Formula parse(const std::string& text) {
        Formula f;
        auto split = [](const std::string& s, char sep) {
            std::vector<std::string> parts;
            std::string cur;
            for (char c : s) {
                if (c == sep) {
                    parts.push_back(detail::trim(cur));
                    cur.clear();
                } else {
                    cur.push_back(c);
                }
            }
            parts.push_back(detail::trim(cur));
            return parts;
        };
        for (const auto& raw : split(text, '+')) {
            if (raw.empty()) throw InputError("empty term in formula '" + text + "'");
            if (raw == "0" || raw == "-1") {
                f.intercept = false;
                continue;
            }
            if (raw == "1") continue;
            Term term;
            for (const auto& fac : split(raw, ':')) {
                if (fac.empty()) throw InputError("empty factor in term '" + raw + "'");
                Factor factor;
                auto caret = fac.find('^');
                factor.column = detail::trim(fac.substr(0, caret));
                if (caret != std::string::npos) {
                    auto p = csv::parse_int<int>(detail::trim(fac.substr(caret + 1)));
                    if (!p || *p < 1) throw InputError("bad power in '" + fac + "'");
                    factor.power = *p;
                }
                term.push_back(factor);
            }
            f.terms.push_back(std::move(term));
        }
        return f;
    }
};

struct DesignOptions {
    // Reference level per categorical column; defaults to the first level in
    // sorted order ("boston" for the four study cities).
    std::map<std::string, std::string> reference_levels;
};

using CovariateValue = std::variant<double, std::string>;

// Everything needed to rebuild a design row from raw covariate values.
struct DesignSpec {
    Formula formula;
    std::map<std::string, std::vector<std::string>> levels; // non-reference levels
    std::map<std::string, std::string> reference;
    std::vector<std::string> all_names; // before aliasing
    std::vector<bool> kept;

    std::vector<std::string> columns_used() const {
        std::set<std::string> s;
        for (const auto& t : formula.terms)
            for (const auto& f : t) s.insert(f.column);
        return {s.begin(), s.end()};
    }

    // Builds the kept design columns for one observation.
    Eigen::VectorXd row(const std::map<std::string, CovariateValue>& values) const {
        std::vector<double> full;
        if (formula.intercept) full.push_back(1.0);
        for (const auto& term : formula.terms) {
            std::vector<double> cols{1.0};
            for (const auto& f : term) {
                auto it = values.find(f.column);
                if (it == values.end()) throw InputError("no value given for covariate '" + f.column + "'");
                std::vector<double> next;
                if (auto lv = levels.find(f.column); lv != levels.end()) {
                    std::string label = std::holds_alternative<std::string>(it->second)
                                            ? std::get<std::string>(it->second)
                                            : csv::format_double(std::get<double>(it->second));
                    for (double c : cols)
                        for (const auto& l : lv->second) next.push_back(l == label ? c : 0.0);
                } else {
                    if (!std::holds_alternative<double>(it->second))
                        throw InputError("covariate '" + f.column + "' must be numeric");
                    const double v = std::pow(std::get<double>(it->second), f.power);
                    for (double c : cols) next.push_back(c * v);
                }
                cols = std::move(next);
            }
            full.insert(full.end(), cols.begin(), cols.end());
        }
        Eigen::VectorXd x(std::count(kept.begin(), kept.end(), true));
        Eigen::Index k = 0;
        for (std::size_t j = 0; j < full.size(); ++j)
            if (kept[j]) x[k++] = full[j];
        return x;
    }
};

struct DesignMatrix {
    Eigen::MatrixXd X;
    std::vector<std::string> names;
    std::vector<std::string> dropped; // aliased columns removed
    std::vector<std::size_t> cluster; // dense cluster index per row
    std::vector<std::string> cluster_labels;
    DesignSpec spec;

    std::size_t clusters() const { return cluster_labels.size(); }
};

inline std::vector<std::size_t> dense_clusters(const std::vector<std::string>& labels,
                                               std::vector<std::string>& unique_out) {
    std::unordered_map<std::string, std::size_t> ids;
    std::vector<std::size_t> out;
    out.reserve(labels.size());
    unique_out.clear();
    for (const auto& l : labels) {
        auto [it, fresh] = ids.emplace(l, unique_out.size());
        if (fresh) unique_out.push_back(l);
        out.push_back(it->second);
    }
    return out;
}

// Expands the formula into a numeric design. Indicators are named
// "column[level]", powers "column^p" and interactions join with ':'. Columns
// that are linear combinations of earlier ones (including all-zero columns)
// are dropped and listed in `dropped`. An empty cluster column gives each row
// its own cluster.
inline DesignMatrix build_design(const DataTable& data, const Formula& formula, const std::string& cluster_column,
                                 const DesignOptions& opt = {}) {
    const auto n = data.rows();
    DesignMatrix d;
    d.spec.formula = formula;

    for (const auto& t : formula.terms)
        for (const auto& f : t) {
            const auto& col = data.column(f.column);
            if (std::holds_alternative<DataTable::Categorical>(col) && !d.spec.levels.count(f.column)) {
                if (f.power != 1) throw InputError("power on categorical column '" + f.column + "'");
                const auto& v = std::get<DataTable::Categorical>(col);
                std::set<std::string> uniq(v.begin(), v.end());
                if (uniq.size() < 2)
                    throw InputError("covariate '" + f.column + "' is constant; no contrast can be formed");
                std::string ref = *uniq.begin();
                if (auto r = opt.reference_levels.find(f.column); r != opt.reference_levels.end()) {
                    if (!uniq.count(r->second))
                        throw InputError("reference level '" + r->second + "' absent from '" + f.column + "'");
                    ref = r->second;
                }
                d.spec.reference[f.column] = ref;
                auto& lv = d.spec.levels[f.column];
                for (const auto& l : uniq)
                    if (l != ref) lv.push_back(l);
            }
        }

    std::vector<std::vector<double>> cols;
    std::vector<std::string> names;
    if (formula.intercept) {
        cols.emplace_back(n, 1.0);
        names.emplace_back("(intercept)");
    }
    for (const auto& term : formula.terms) {
        std::vector<std::vector<double>> tc{std::vector<double>(n, 1.0)};
        std::vector<std::string> tn{""};
        for (const auto& f : term) {
            std::vector<std::vector<double>> next;
            std::vector<std::string> nn;
            auto join = [](const std::string& a, const std::string& b) { return a.empty() ? b : a + ":" + b; };
            if (auto lv = d.spec.levels.find(f.column); lv != d.spec.levels.end()) {
                const auto& v = std::get<DataTable::Categorical>(data.column(f.column));
                for (std::size_t c = 0; c < tc.size(); ++c)
                    for (const auto& l : lv->second) {
                        std::vector<double> col(n);
                        for (std::size_t i = 0; i < n; ++i) col[i] = v[i] == l ? tc[c][i] : 0.0;
                        next.push_back(std::move(col));
                        nn.push_back(join(tn[c], f.column + "[" + l + "]"));
                    }
            } else {
                const auto& v = data.numeric(f.column);
                const std::string label = f.power == 1 ? f.column : f.column + "^" + std::to_string(f.power);
                for (std::size_t c = 0; c < tc.size(); ++c) {
                    std::vector<double> col(n);
                    for (std::size_t i = 0; i < n; ++i) col[i] = tc[c][i] * std::pow(v[i], f.power);
                    next.push_back(std::move(col));
                    nn.push_back(join(tn[c], label));
                }
            }
            tc = std::move(next);
            tn = std::move(nn);
        }
        for (std::size_t c = 0; c < tc.size(); ++c) {
            cols.push_back(std::move(tc[c]));
            names.push_back(tn[c]);
        }
    }

    // Sequential Gram-Schmidt keeps columns in formula order and drops those
    // already spanned by the kept ones.
    d.spec.all_names = names;
    d.spec.kept.assign(cols.size(), false);
    std::vector<Eigen::VectorXd> basis;
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < cols.size(); ++j) {
        Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(cols[j].data(), static_cast<Eigen::Index>(n));
        const double norm0 = v.norm();
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& q : basis) v -= q.dot(v) * q;
        const double norm = v.norm();
        if (norm0 == 0 || norm <= 1e-9 * norm0) {
            d.dropped.push_back(names[j]);
            continue;
        }
        basis.push_back(v / norm);
        keep.push_back(j);
        d.spec.kept[j] = true;
    }
    d.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        d.names.push_back(names[keep[k]]);
        for (std::size_t i = 0; i < n; ++i) d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = cols[keep[k]][i];
    }

    if (cluster_column.empty()) {
        std::vector<std::string> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = std::to_string(i);
        d.cluster = dense_clusters(labels, d.cluster_labels);
    } else {
        d.cluster = dense_clusters(data.labels(cluster_column), d.cluster_labels);
    }
    return d;
}

} // namespace dmarket
