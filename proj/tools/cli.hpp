#pragma once

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmarket/dmarket.hpp"

namespace dmarket::cli {

namespace fs = std::filesystem;

struct RunConfig {
    std::string subcommand;
    std::string users, messages, lexicon;
    std::string out = "out";
    std::vector<std::string> cities;
    std::optional<std::int64_t> window_start, window_end;
    double alpha = 0.85;
    double tolerance = 1e-12;
    int max_iterations = 1000;
    int bins = 20;
    std::size_t min_bin_count = 50;
    std::string cluster_on = "seeker";
    std::string model = "logistic";
    std::string outcome, formula, sweep;
    std::string level = "message";
    std::string sex = "all";
    int grid_points = 41;
    bool small_sample = false;
    unsigned threads = 1;
    std::string strategy = "hybrid";
    GenerativeConfig sim;
};

// One "stage=... status=ok key=value" line per completed stage.
class StageLine {
public:
    explicit StageLine(const std::string& stage) { s_ << "stage=" << stage << " status=ok"; }

    template <class T>
    StageLine& operator()(const std::string& key, const T& v) {
        s_ << ' ' << key << '=';
        if constexpr (std::is_floating_point_v<T>)
            s_ << csv::format_double(v);
        else if constexpr (std::is_same_v<T, bool>)
            s_ << (v ? "true" : "false");
        else if constexpr (std::is_arithmetic_v<T>)
            s_ << v;
        else
            s_ << token(std::string(v));
        return *this;
    }

    void emit(std::ostream& os) const { os << s_.str() << '\n'; }

private:
    static std::string token(std::string v) {
        for (auto& c : v)
            if (std::isspace(static_cast<unsigned char>(c))) c = '_';
        return v.empty() ? "-" : v;
    }
    std::ostringstream s_;
};

inline std::string slug(const std::string& s) {
    std::string out;
    for (char c : detail::lower(s)) out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    return out.empty() ? "_" : out;
}

inline void require_file(const std::string& path, const char* flag) {
    if (path.empty()) throw InputError(std::string("missing required option ") + flag);
    if (!fs::is_regular_file(path)) throw InputError("missing input file: " + path + " (" + flag + ")");
}

inline void prepare_out(const RunConfig& c) {
    if (c.out.empty()) throw InputError("--out must not be empty");
    if (fs::exists(c.out) && !fs::is_directory(c.out)) throw InputError("output path is not a directory: " + c.out);
    fs::create_directories(c.out);
}

inline void save_json(const fs::path& p, const nlohmann::ordered_json& j) { csv::write_atomic(p, j.dump(2) + "\n"); }

struct LoadedMarkets {
    std::vector<std::string> cities;
    std::vector<MarketDataset> markets;
    std::vector<UserRecord> users;
    TimeWindow window;
};

inline void report_issues(const std::string& path, const std::vector<RowIssue>& issues, std::ostream& err) {
    const std::size_t shown = std::min<std::size_t>(issues.size(), 10);
    for (std::size_t i = 0; i < shown; ++i)
        err << "warning: " << path << ":" << issues[i].line << ": " << issues[i].reason << '\n';
    if (issues.size() > shown) err << "warning: " << path << ": " << issues.size() - shown << " more rows skipped\n";
}

inline LoadedMarkets load_markets(const RunConfig& c, std::ostream& out, std::ostream& err) {
    std::optional<Lexicon> lex;
    if (!c.lexicon.empty()) lex = Lexicon::load(c.lexicon);

    auto users = load_users(c.users, std::nullopt);
    report_issues(c.users, users.issues, err);
    auto messages = load_messages(c.messages);
    report_issues(c.messages, messages.issues, err);
    annotate_messages(messages.records, lex ? &*lex : nullptr);

    LoadedMarkets m;
    std::set<std::string> present;
    for (const auto& u : users.records) present.insert(u.city);
    if (c.cities.empty()) {
        m.cities.assign(present.begin(), present.end());
    } else {
        for (const auto& city : c.cities) {
            if (!present.count(city)) throw InputError("city '" + city + "' not found in " + c.users);
            if (std::find(m.cities.begin(), m.cities.end(), city) == m.cities.end()) m.cities.push_back(city);
        }
    }
    if (m.cities.empty()) throw InputError("no users loaded from " + c.users);

    if (c.window_start && c.window_end) {
        m.window = {*c.window_start, *c.window_end};
    } else {
        if (messages.records.empty()) throw InputError("no messages loaded from " + c.messages);
        auto [lo, hi] = std::minmax_element(messages.records.begin(), messages.records.end(),
                                            [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
        m.window = {c.window_start.value_or(lo->timestamp), c.window_end.value_or(hi->timestamp)};
        if (m.window.end <= m.window.start) m.window.end = m.window.start + 1;
    }

    // Each message is routed to its sender's city (or the receiver's when the
    // sender is unknown); cross-city contacts then count as unknown receivers.
    std::unordered_map<std::string, std::string> city_of;
    for (const auto& u : users.records) city_of.emplace(u.user_id, u.city);
    std::map<std::string, std::vector<MessageEvent>> routed;
    std::size_t unrouted = 0;
    for (auto& msg : messages.records) {
        auto it = city_of.find(msg.sender_id);
        if (it == city_of.end()) it = city_of.find(msg.receiver_id);
        if (it == city_of.end()) {
            ++unrouted;
            continue;
        }
        routed[it->second].push_back(std::move(msg));
    }
    if (unrouted) err << "warning: " << unrouted << " messages involve no known user\n";

    for (const auto& city : m.cities) {
        std::vector<UserRecord> cu;
        for (const auto& u : users.records)
            if (u.city == city) cu.push_back(u);
        auto ds = build_market(cu, routed[city], m.window);
        const auto& r = ds.report;
        StageLine("ingest")("city", city)("users", ds.users.size())("first_contacts", ds.first_contacts.size())(
            "outside_window", r.outside_window)("self", r.self_messages)("unknown_user", r.unknown_user)(
            "same_sex", r.same_sex)("duplicate", r.duplicate)("inactive_users", r.inactive_users)
            .emit(out);
        m.markets.push_back(std::move(ds));
    }
    m.users = std::move(users.records);
    return m;
}

// Per-city outputs go straight into --out for a single city and into one
// subdirectory per city otherwise.
inline fs::path city_dir(const RunConfig& c, const LoadedMarkets& m, std::size_t k) {
    fs::path p(c.out);
    return m.cities.size() == 1 ? p : p / slug(m.cities[k]);
}

inline PageRankOptions pagerank_options(const RunConfig& c) {
    PageRankOptions o;
    o.alpha = c.alpha;
    o.tolerance = c.tolerance;
    o.max_iterations = c.max_iterations;
    o.threads = c.threads;
    return o;
}

inline BinningOptions binning(const RunConfig& c) { return {c.bins, c.min_bin_count}; }

inline std::vector<CityAnalysis> analyze_all(const RunConfig& c, const LoadedMarkets& m, std::ostream& out) {
    std::vector<CityAnalysis> res;
    for (std::size_t k = 0; k < m.markets.size(); ++k) {
        auto a = analyze_market(m.markets[k], pagerank_options(c));
        StageLine("rank")("city", m.cities[k])("nodes", a.full_graph_nodes)("component", a.component.size())(
            "edges", a.component.edge_count())("iterations", a.ranks.iterations)("residual", a.ranks.residual)
            .emit(out);
        res.push_back(std::move(a));
    }
    return res;
}

inline csv::Writer first_contacts_csv(const MarketDataset& ds) {
    csv::Writer w({"sender_id", "receiver_id", "timestamp", "word_count", "positive_word_count", "replied",
                   "initiation"});
    auto opt = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string{}; };
    for (const auto& fc : ds.first_contacts)
        w.add(fc.message.sender_id, fc.message.receiver_id, fc.message.timestamp, opt(fc.message.word_count),
              opt(fc.message.positive_word_count), fc.replied, fc.initiation);
    return w;
}

inline void write_ingest(const RunConfig& c, const LoadedMarkets& m) {
    for (std::size_t k = 0; k < m.markets.size(); ++k) {
        const auto dir = city_dir(c, m, k);
        const auto& ds = m.markets[k];
        users_csv(ds.users).save(dir / "users.csv");
        first_contacts_csv(ds).save(dir / "first_contacts.csv");
        auto j = to_json(market_summary(ds), ds.report);
        j["city"] = m.cities[k];
        j["window"] = {{"start", ds.window.start}, {"end", ds.window.end}};
        save_json(dir / "summary.json", j);
    }
}

inline void write_ranks(const RunConfig& c, const LoadedMarkets& m, const std::vector<CityAnalysis>& as) {
    for (std::size_t k = 0; k < as.size(); ++k) ranks_csv(as[k].ranks).save(city_dir(c, m, k) / "ranks.csv");
}

// Histogram of first contacts received per active user, by sex.
inline csv::Writer received_histogram(const MarketDataset& ds, Sex sex) {
    std::unordered_map<std::string, std::size_t> received;
    for (const auto& fc : ds.first_contacts)
        if (fc.initiation) ++received[fc.message.receiver_id];
    std::map<std::size_t, std::size_t> hist;
    for (const auto& u : ds.users)
        if (u.sex == sex) {
            auto it = received.find(u.user_id);
            ++hist[it == received.end() ? 0 : it->second];
        }
    csv::Writer w({"messages_received", "users"});
    for (const auto& [k, n] : hist) w.add(k, n);
    return w;
}

inline csv::Writer rank_by_age(const CityAnalysis& a, Sex sex) {
    std::map<int, std::pair<double, std::size_t>> acc;
    auto idx = a.dataset.user_index();
    for (std::size_t i = 0; i < a.ranks.node_ids.size(); ++i) {
        if (a.ranks.sex[i] != sex) continue;
        auto& e = acc[a.dataset.users[idx.at(a.ranks.node_ids[i])].age];
        e.first += a.ranks.scaled_rank[i];
        ++e.second;
    }
    csv::Writer w({"age", "mean_scaled_rank", "users"});
    for (const auto& [age, e] : acc) w.add(age, e.first / static_cast<double>(e.second), e.second);
    return w;
}

inline void write_gaps(const RunConfig& c, const LoadedMarkets& m, const std::vector<CityAnalysis>& as,
                       std::ostream& out, std::ostream& err) {
    for (std::size_t k = 0; k < as.size(); ++k) {
        const auto dir = city_dir(c, m, k);
        const auto& a = as[k];
        gaps_csv(a.gaps).save(dir / "gap_records.csv");
        nlohmann::ordered_json summary;
        summary["city"] = m.cities[k];
        for (Sex sex : {Sex::male, Sex::female}) {
            const std::string tag = to_string(sex);
            std::vector<GapRecord> gs;
            for (const auto& g : a.gaps)
                if (g.sender_sex == sex) gs.push_back(g);
            auto profiles = user_gap_profiles(gs);
            profiles_csv(profiles).save(dir / ("profiles_" + tag + ".csv"));
            received_histogram(a.dataset, sex).save(dir / ("received_" + tag + ".csv"));
            rank_by_age(a, sex).save(dir / ("rank_by_age_" + tag + ".csv"));

            std::vector<double> medians;
            for (const auto& p : profiles) medians.push_back(p.median_gap);
            nlohmann::ordered_json js;
            js["senders"] = profiles.size();
            js["initiations"] = gs.size();
            if (medians.size() >= 2) {
                auto density = gap_density(medians);
                curve_csv(density).save(dir / ("density_" + tag + ".csv"));
                js["mean_median_gap"] = stats::mean(medians);
                js["density_mass"] = trapezoid(density);
            } else {
                err << "warning: " << m.cities[k] << " " << tag << ": too few senders for a density\n";
            }
            auto reply = reply_rate_by_gap(gs, binning(c));
            curve_csv(reply).save(dir / ("reply_rate_" + tag + ".csv"));
            curve_csv(volume_by_gap(profiles, binning(c))).save(dir / ("volume_" + tag + ".csv"));
            curve_csv(iqr_by_gap(profiles, binning(c))).save(dir / ("iqr_" + tag + ".csv"));
            js["reply_rate_bins"] = reply.size();
            js["reply_rate_omitted"] = reply.omitted;
            try {
                js["sender_receiver_correlation"] = sender_receiver_correlation(gs, a.ranks);
            } catch (const Error&) {
                js["sender_receiver_correlation"] = nullptr;
            }
            StageLine l("gaps");
            l("city", m.cities[k])("sex", tag)("senders", profiles.size())("initiations", gs.size());
            if (js.contains("mean_median_gap")) l("mean_median_gap", js["mean_median_gap"].get<double>());
            l.emit(out);
            summary[tag] = js;
        }
        save_json(dir / "gaps_summary.json", summary);
    }
}

struct ModelSpec {
    std::string name;
    Family family;
    std::string outcome;
    std::string formula;
    std::string level; // "message" or "user"
    std::string cluster;
    std::string sweep;
};

inline DataTable model_data(const ModelSpec& s, const std::vector<CityAnalysis>& as, const std::string& sex) {
    auto t = s.level == "user" ? user_table(as) : message_table(as);
    if (sex != "all") t = filter_rows(t, "sex", sex);
    if (t.rows() == 0) throw InputError("no rows for model '" + s.name + "'");
    return t;
}

// Predicted mean over the observed range of `sweep`, one curve per city, with
// the other numeric covariates held at their city means and categorical ones
// at the reference level.
inline std::vector<std::pair<std::string, BinnedCurve>> city_curves(const FitResult& fit, const DataTable& t,
                                                                    const std::string& sweep, int points) {
    const auto& xs = t.numeric(sweep);
    auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
    PredictionSweep sw;
    sw.covariate = sweep;
    for (int i = 0; i < points; ++i)
        sw.grid.push_back(points == 1 ? *lo : *lo + (*hi - *lo) * i / (points - 1));

    const auto used = fit.spec.columns_used();
    const auto cities = t.labels("city");
    const std::set<std::string> level_set(cities.begin(), cities.end());
    std::vector<std::string> levels(level_set.begin(), level_set.end());
    const bool by_city = std::find(used.begin(), used.end(), "city") != used.end();
    if (!by_city) levels = {""};

    std::vector<std::pair<std::string, BinnedCurve>> out;
    for (const auto& city : levels) {
        std::map<std::string, CovariateValue> held;
        for (const auto& col : used) {
            if (col == sweep) continue;
            if (col == "city") {
                held[col] = city;
            } else if (t.is_numeric(col)) {
                const auto& v = t.numeric(col);
                double s = 0;
                std::size_t n = 0;
                for (std::size_t i = 0; i < v.size(); ++i)
                    if (city.empty() || cities[i] == city) {
                        s += v[i];
                        ++n;
                    }
                held[col] = n ? s / static_cast<double>(n) : 0.0;
            } else {
                held[col] = fit.spec.reference.at(col);
            }
        }
        out.emplace_back(city, predict_curve(fit, sw, held));
    }
    return out;
}

inline FitOptions fit_options(const RunConfig& c) {
    FitOptions o;
    o.small_sample_correction = c.small_sample;
    return o;
}

inline FitResult run_model(const RunConfig& c, const ModelSpec& s, const std::vector<CityAnalysis>& as,
                           const std::string& sex, const fs::path& dir, std::ostream& out) {
    auto t = model_data(s, as, sex);
    auto design = build_design(t, Formula::parse(s.formula), s.cluster);
    auto fit = fit_model(s.family, design, to_vector(t.numeric(s.outcome)), fit_options(c));
    auto j = to_json(fit);
    j["name"] = s.name;
    j["outcome"] = s.outcome;
    j["formula"] = s.formula;
    j["level"] = s.level;
    j["sex"] = sex;
    j["cluster"] = s.cluster.empty() ? "row" : s.cluster;
    const std::string stem = s.name + (sex == "all" ? "" : "_" + sex);
    save_json(dir / (stem + ".json"), j);
    if (!s.sweep.empty()) {
        for (const auto& [city, curve] : city_curves(fit, t, s.sweep, c.grid_points)) {
            csv::Writer w({s.sweep, "predicted", "standard_error"});
            for (std::size_t k = 0; k < curve.size(); ++k)
                w.add(curve.bin_centers[k], curve.values[k], curve.standard_errors[k]);
            w.save(dir / (stem + "_curve" + (city.empty() ? "" : "_" + slug(city)) + ".csv"));
        }
    }
    StageLine("fit")("model", s.name)("family", to_string(fit.family))("sex", sex)("n", fit.n)(
        "clusters", fit.n_clusters)("converged", fit.converged)("iterations", fit.iterations)(
        "loglik", fit.log_likelihood)("dropped", design.dropped.size())
        .emit(out);
    return fit;
}

// Adds city main effects and interactions with every numeric term when more
// than one city is present.
inline std::string with_cities(const std::vector<std::string>& terms, bool multi_city) {
    std::string f;
    for (const auto& t : terms) f += (f.empty() ? "" : " + ") + t;
    if (multi_city) {
        f += " + city";
        for (const auto& t : terms) f += " + " + t + ":city";
    }
    return f;
}

inline std::string cluster_column(const RunConfig& c, const std::string& level) {
    if (c.cluster_on == "city") return "city";
    return level == "user" ? "user_id" : "seeker";
}

inline std::vector<ModelSpec> report_models(const RunConfig& c, bool multi_city) {
    const auto msg = cluster_column(c, "message");
    // User-level desirability models cluster on city when several are present.
    const std::string usr = multi_city ? "city" : "";
    return {
        {"desirability", Family::fractional_logit, "scaled_rank",
         with_cities({"age", "age^2"}, multi_city) + " + ethnicity + education", "user", usr, "age"},
        {"message_length", Family::negative_binomial, "word_count", with_cities({"gap", "gap^2"}, multi_city),
         "message", msg, "gap"},
        {"message_positivity", Family::fractional_logit, "positive_fraction",
         with_cities({"gap", "gap^2"}, multi_city), "message", msg, "gap"},
        {"reply_by_length", Family::logistic, "replied", with_cities({"gap", "words", "words^2"}, multi_city),
         "message", msg, "words"},
        {"reply_by_positivity", Family::logistic, "replied",
         with_cities({"gap", "pct_positive", "pct_positive^2"}, multi_city), "message", msg, "pct_positive"},
    };
}

inline std::string default_outcome(Family f, const std::string& level) {
    if (level == "user") return "scaled_rank";
    switch (f) {
    case Family::logistic: return "replied";
    case Family::fractional_logit: return "positive_fraction";
    case Family::negative_binomial: return "word_count";
    }
    return "replied";
}

inline GenerativeConfig sim_config(const RunConfig& c) {
    auto g = c.sim;
    auto s = parse_strategy(c.strategy);
    if (!s) throw InputError("unknown strategy '" + c.strategy + "'");
    g.strategy = *s;
    g.validate();
    return g;
}

inline void cmd_simulate(const RunConfig& c, std::ostream& out) {
    const auto g = sim_config(c);
    prepare_out(c);
    auto m = generate_market(g, c.threads);
    const fs::path dir(c.out);
    users_csv(m.users).save(dir / "users.csv");
    messages_csv(m.messages).save(dir / "messages.csv");
    ground_truth_csv(m).save(dir / "ground_truth.csv");
    StageLine("simulate")("strategy", to_string(g.strategy))("seed", g.seed)("users", m.users.size())(
        "messages", m.messages.size())("initiations", m.truth.initiations.size())(
        "conflicts_dropped", m.book.conflicts_dropped)
        .emit(out);
}

inline void cmd_roundtrip(const RunConfig& c, std::ostream& out) {
    const auto g = sim_config(c);
    prepare_out(c);
    RoundtripOptions o;
    o.pagerank = pagerank_options(c);
    o.bins = binning(c);
    auto r = pipeline_roundtrip(g, o);
    auto j = to_json(r);
    j["strategy"] = to_string(g.strategy);
    j["seed"] = g.seed;
    save_json(fs::path(c.out) / "roundtrip.json", j);
    StageLine("roundtrip")("users", r.users)("component", r.component_users)("iterations", r.pagerank_iterations)(
        "spearman_latent", r.spearman_latent_rank)("true_mean_median_gap", r.true_mean_median_gap)(
        "mean_median_gap", r.estimated_mean_median_gap)("reply_curve_spearman", r.reply_curve_spearman)(
        "fitted_reply_slope", r.fitted_reply_slope)
        .emit(out);
}

inline void cmd_text(const RunConfig& c, std::ostream& out, std::ostream& err) {
    require_file(c.messages, "--messages");
    require_file(c.lexicon, "--lexicon");
    prepare_out(c);
    auto lex = Lexicon::load(c.lexicon);
    auto msgs = load_messages(c.messages);
    report_issues(c.messages, msgs.issues, err);
    csv::Writer w({"sender_id", "receiver_id", "timestamp", "word_count", "positive_count", "positive_fraction",
                   "scaled_word_count"});
    std::size_t scored = 0;
    for (const auto& m : msgs.records) {
        MessageTextStats s;
        if (!m.text.empty()) {
            s = score_message(m.text, lex);
            ++scored;
        } else if (m.word_count) {
            s = make_text_stats(*m.word_count, m.positive_word_count.value_or(0));
        }
        w.add(m.sender_id, m.receiver_id, m.timestamp, s.word_count, s.positive_count, s.positive_fraction,
              s.scaled_word_count);
    }
    w.save(fs::path(c.out) / "message_text.csv");
    StageLine("text")("messages", msgs.records.size())("scored_from_text", scored)("skipped_rows", msgs.issues.size())
        .emit(out);
}

inline void validate_market_inputs(const RunConfig& c) {
    require_file(c.users, "--users");
    require_file(c.messages, "--messages");
    if (!c.lexicon.empty()) require_file(c.lexicon, "--lexicon");
    if (c.window_start && c.window_end && *c.window_end <= *c.window_start)
        throw InputError("--window-end must be after --window-start");
}

inline void cmd_market(const RunConfig& c, std::ostream& out, std::ostream& err) {
    validate_market_inputs(c);
    std::optional<Family> family;
    if (c.subcommand == "fit") {
        family = parse_family(c.model);
        if (!family) throw InputError("unknown model '" + c.model + "'");
    }
    prepare_out(c);
    auto m = load_markets(c, out, err);
    if (c.subcommand == "ingest" || c.subcommand == "report") write_ingest(c, m);
    if (c.subcommand == "ingest") return;

    auto as = analyze_all(c, m, out);
    write_ranks(c, m, as);
    if (c.subcommand == "gaps" || c.subcommand == "report") write_gaps(c, m, as, out, err);

    const bool multi = m.cities.size() > 1;
    if (c.subcommand == "fit") {
        ModelSpec s;
        s.name = "fit";
        s.family = *family;
        s.level = c.level;
        s.outcome = c.outcome.empty() ? default_outcome(*family, c.level) : c.outcome;
        s.formula = c.formula.empty()
                        ? (c.level == "user" ? with_cities({"age", "age^2"}, multi) + " + ethnicity + education"
                                             : with_cities({"gap", "gap^2"}, multi))
                        : c.formula;
        s.cluster = cluster_column(c, c.level);
        s.sweep = c.sweep;
        run_model(c, s, as, c.sex, c.out, out);
    } else if (c.subcommand == "report") {
        const fs::path dir = fs::path(c.out) / "models";
        for (const auto& spec : report_models(c, multi))
            for (const char* sex : {"male", "female"}) {
                try {
                    run_model(c, spec, as, sex, dir, out);
                } catch (const InputError& e) {
                    err << "warning: model " << spec.name << " (" << sex << ") skipped: " << e.what() << '\n';
                    out << "stage=fit status=skipped model=" << spec.name << " sex=" << sex << '\n';
                }
            }
    }
}

inline void add_market_options(CLI::App* sub, RunConfig& c) {
    sub->add_option("--users", c.users, "users CSV");
    sub->add_option("--messages", c.messages, "messages CSV");
    sub->add_option("--city", c.cities, "restrict to these cities (repeatable)")->delimiter(',');
    sub->add_option("--lexicon", c.lexicon, "positive-word lexicon, one term per line");
    sub->add_option("--window-start", c.window_start, "window start, epoch seconds (default: first message)");
    sub->add_option("--window-end", c.window_end, "window end, epoch seconds (default: last message)");
}

inline void add_rank_options(CLI::App* sub, RunConfig& c) {
    sub->add_option("--alpha", c.alpha, "PageRank damping")->capture_default_str()->check(CLI::Range(0.0, 0.999999));
    sub->add_option("--tolerance", c.tolerance, "PageRank max-norm tolerance")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub->add_option("--max-iterations", c.max_iterations)->capture_default_str()->check(CLI::PositiveNumber);
}

inline void add_bin_options(CLI::App* sub, RunConfig& c) {
    sub->add_option("--bins", c.bins, "equal-width gap bins")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--min-bin-count", c.min_bin_count, "minimum observations per reported bin")
        ->capture_default_str();
}

inline void add_sim_options(CLI::App* sub, RunConfig& c) {
    auto& g = c.sim;
    sub->add_option("--strategy", c.strategy)
        ->capture_default_str()
        ->check(CLI::IsMember({"matching", "competition", "hybrid"}));
    sub->add_option("--reach", g.reach)->capture_default_str();
    sub->add_option("--gap-noise", g.gap_noise)->capture_default_str()->check(CLI::NonNegativeNumber);
    sub->add_option("--n-men", g.n_men)->capture_default_str();
    sub->add_option("--n-women", g.n_women)->capture_default_str();
    sub->add_option("--mean-contacts", g.mean_contacts)->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--reply-intercept", g.reply_intercept)->capture_default_str();
    sub->add_option("--reply-slope", g.reply_slope)->capture_default_str();
    sub->add_option("--seed", g.seed)->capture_default_str();
    sub->add_option("--sim-city", g.city, "city label for generated users")->capture_default_str();
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    RunConfig c;
    c.threads = std::max(1u, std::thread::hardware_concurrency());
    CLI::App app{"Desirability analysis of online dating message networks"};
    app.name("dmarket");
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.add_option("--out", c.out, "output directory")->capture_default_str();
    app.add_option("--threads", c.threads, "worker threads")->check(CLI::Range(1u, 1024u));

    auto* ingest = app.add_subcommand("ingest", "build first-contact markets and summary tables");
    auto* rank = app.add_subcommand("rank", "PageRank desirability and scaled ranks");
    auto* gaps = app.add_subcommand("gaps", "desirability-gap distributions and binned curves");
    auto* text = app.add_subcommand("text", "word counts and positive-word share per message");
    auto* fit = app.add_subcommand("fit", "one regression with cluster-robust errors");
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic market");
    auto* roundtrip = app.add_subcommand("roundtrip", "simulate and check the pipeline against ground truth");
    auto* report = app.add_subcommand("report", "every table and curve for an input market");

    for (auto* s : {ingest, rank, gaps, fit, report}) add_market_options(s, c);
    for (auto* s : {rank, gaps, fit, report, roundtrip}) add_rank_options(s, c);
    for (auto* s : {gaps, report, roundtrip}) add_bin_options(s, c);
    for (auto* s : {simulate, roundtrip}) add_sim_options(s, c);
    for (auto* s : {fit, report})
        s->add_option("--cluster-on", c.cluster_on)->capture_default_str()->check(CLI::IsMember({"seeker", "city"}));
    for (auto* s : {fit, report})
        s->add_flag("--small-sample", c.small_sample, "apply the G/(G-1) cluster correction");
    for (auto* s : {fit, report}) s->add_option("--grid-points", c.grid_points)->capture_default_str()->check(CLI::PositiveNumber);
    text->add_option("--messages", c.messages, "messages CSV with a text column");
    text->add_option("--lexicon", c.lexicon, "positive-word lexicon");
    fit->add_option("--model", c.model, "logistic | fractional | negbin")->capture_default_str();
    fit->add_option("--outcome", c.outcome, "outcome column");
    fit->add_option("--formula", c.formula, "e.g. \"gap + gap^2 + city + gap:city\"");
    fit->add_option("--level", c.level)->capture_default_str()->check(CLI::IsMember({"message", "user"}));
    fit->add_option("--sex", c.sex, "restrict to senders (or users) of one sex")
        ->capture_default_str()
        ->check(CLI::IsMember({"male", "female", "all"}));
    fit->add_option("--sweep", c.sweep, "numeric covariate for a predicted-value curve");

    std::vector<const char*> argv{"dmarket"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }
    c.subcommand = app.get_subcommands().front()->get_name();

    try {
        if (c.subcommand == "simulate")
            cmd_simulate(c, out);
        else if (c.subcommand == "roundtrip")
            cmd_roundtrip(c, out);
        else if (c.subcommand == "text")
            cmd_text(c, out, err);
        else
            cmd_market(c, out, err);
    } catch (const ConvergenceError& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

} // namespace dmarket::cli
