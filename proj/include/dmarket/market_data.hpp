#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "dmarket/csv.hpp"
#include "dmarket/error.hpp"

namespace dmarket {

enum class Sex { male, female };
enum class Education { no_college, college, post_college, missing };

inline const char* to_string(Sex s) { return s == Sex::male ? "male" : "female"; }

inline const char* to_string(Education e) {
    switch (e) {
    case Education::no_college: return "no_college";
    case Education::college: return "college";
    case Education::post_college: return "post_college";
    case Education::missing: break;
    }
    return "missing";
}

inline Sex opposite(Sex s) { return s == Sex::male ? Sex::female : Sex::male; }

namespace detail {

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

} // namespace detail

inline std::optional<Sex> parse_sex(std::string_view s) {
    auto v = detail::lower(detail::trim(s));
    if (v == "male" || v == "m") return Sex::male;
    if (v == "female" || v == "f") return Sex::female;
    return std::nullopt;
}

inline std::optional<Education> parse_education(std::string_view s) {
    auto v = detail::lower(detail::trim(s));
    if (v.empty() || v == "missing" || v == "na") return Education::missing;
    if (v == "no_college" || v == "no college") return Education::no_college;
    if (v == "college") return Education::college;
    if (v == "post_college" || v == "post-college" || v == "post college") return Education::post_college;
    return std::nullopt;
}

// Label used for absent optional categorical attributes.
inline constexpr const char* kMissing = "missing";

struct UserRecord {
    std::string user_id;
    Sex sex = Sex::male;
    std::string city;
    int age = 18;
    std::string ethnicity = kMissing;
    Education education = Education::missing;
    // body_type, has_children, seeking
    std::map<std::string, std::string> extra_attributes;
};

struct MessageEvent {
    std::string sender_id;
    std::string receiver_id;
    std::int64_t timestamp = 0;
    std::optional<int> word_count;
    std::optional<int> positive_word_count;
    std::string text;
};

// Earliest message in one direction of a user pair.
struct FirstContact {
    MessageEvent message;
    // A reverse-direction first contact exists with a strictly later timestamp.
    bool replied = false;
    // No reverse-direction first contact precedes this one, i.e. it opens the
    // conversation rather than answering it.
    bool initiation = true;
};

struct TimeWindow {
    std::int64_t start = 0;
    std::int64_t end = 0;

    bool contains(std::int64_t t) const { return t >= start && t <= end; }
};

struct RowIssue {
    std::size_t line = 0;
    std::string reason;
};

template <class T>
struct LoadResult {
    std::vector<T> records;
    std::vector<RowIssue> issues;
};

struct BuildReport {
    std::size_t input_messages = 0;
    std::size_t outside_window = 0;
    std::size_t self_messages = 0;
    std::size_t unknown_user = 0;
    std::size_t same_sex = 0;
    std::size_t duplicate = 0; // later messages in an already-seen direction
    std::size_t retained = 0;
    std::size_t inactive_users = 0;

    std::size_t accounted() const {
        return outside_window + self_messages + unknown_user + same_sex + duplicate + retained;
    }
};

struct MarketDataset {
    std::vector<UserRecord> users;
    std::vector<FirstContact> first_contacts; // ordered by (timestamp, input order)
    TimeWindow window;
    BuildReport report;

    std::unordered_map<std::string, std::size_t> user_index() const {
        std::unordered_map<std::string, std::size_t> idx;
        idx.reserve(users.size());
        for (std::size_t i = 0; i < users.size(); ++i) idx.emplace(users[i].user_id, i);
        return idx;
    }
};

inline const std::vector<std::string>& users_csv_header() {
    static const std::vector<std::string> h{"user_id", "sex", "city", "age", "ethnicity",
                                            "education", "body_type", "has_children", "seeking"};
    return h;
}

inline const std::vector<std::string>& messages_csv_header() {
    static const std::vector<std::string> h{"sender_id", "receiver_id", "timestamp",
                                            "word_count", "positive_word_count", "text"};
    return h;
}

inline constexpr const char* kExtraColumns[] = {"body_type", "has_children", "seeking"};

// Loads users, keeping rows whose city equals `city` (all rows when nullopt).
// Duplicate ids anywhere in the file are fatal; other bad rows are reported.
inline LoadResult<UserRecord> load_users(const std::filesystem::path& path,
                                         const std::optional<std::string>& city) {
    auto table = csv::Table::read(path);
    const auto c_id = table.require("user_id");
    const auto c_sex = table.require("sex");
    const auto c_city = table.require("city");
    const auto c_age = table.require("age");
    const auto c_eth = table.require("ethnicity");
    const auto c_edu = table.require("education");
    std::vector<std::pair<std::string, std::optional<std::size_t>>> extras;
    for (auto name : kExtraColumns) extras.emplace_back(name, table.column(name));

    LoadResult<UserRecord> out;
    std::unordered_set<std::string> seen;
    for (const auto& row : table.rows()) {
        auto issue = [&](std::string reason) { out.issues.push_back({row.line, std::move(reason)}); };
        if (row.fields.size() != table.header().size()) {
            issue("expected " + std::to_string(table.header().size()) + " fields, found " +
                  std::to_string(row.fields.size()));
            continue;
        }
        const auto& f = row.fields;
        std::string id = detail::trim(f[c_id]);
        if (id.empty()) {
            issue("empty user_id");
            continue;
        }
        if (!seen.insert(id).second)
            throw InputError(table.path() + ": duplicate user_id '" + id + "' on line " + std::to_string(row.line));

        UserRecord u;
        u.user_id = id;
        u.city = detail::trim(f[c_city]);
        auto sex = parse_sex(f[c_sex]);
        if (!sex) {
            issue("invalid sex '" + f[c_sex] + "'");
            continue;
        }
        u.sex = *sex;
        auto age = csv::parse_int<int>(detail::trim(f[c_age]));
        if (!age || *age < 18) {
            issue("invalid age '" + f[c_age] + "'");
            continue;
        }
        u.age = *age;
        auto edu = parse_education(f[c_edu]);
        if (!edu) {
            issue("invalid education '" + f[c_edu] + "'");
            continue;
        }
        u.education = *edu;
        auto eth = detail::trim(f[c_eth]);
        u.ethnicity = eth.empty() ? kMissing : eth;
        for (const auto& [name, col] : extras) {
            std::string v = col ? detail::trim(f[*col]) : std::string{};
            u.extra_attributes[name] = v.empty() ? kMissing : v;
        }
        if (city && u.city != *city) continue;
        out.records.push_back(std::move(u));
    }
    return out;
}

inline LoadResult<MessageEvent> load_messages(const std::filesystem::path& path) {
    auto table = csv::Table::read(path);
    const auto c_s = table.require("sender_id");
    const auto c_r = table.require("receiver_id");
    const auto c_t = table.require("timestamp");
    const auto c_wc = table.column("word_count");
    const auto c_pc = table.column("positive_word_count");
    const auto c_text = table.column("text");

    LoadResult<MessageEvent> out;
    for (const auto& row : table.rows()) {
        const auto& f = row.fields;
        auto issue = [&](std::string reason) { out.issues.push_back({row.line, std::move(reason)}); };
        if (f.size() != table.header().size()) {
            issue("expected " + std::to_string(table.header().size()) + " fields, found " +
                  std::to_string(f.size()));
            continue;
        }
        MessageEvent m;
        m.sender_id = detail::trim(f[c_s]);
        m.receiver_id = detail::trim(f[c_r]);
        if (m.sender_id.empty() || m.receiver_id.empty()) {
            issue("empty sender or receiver id");
            continue;
        }
        auto t = csv::parse_int<std::int64_t>(detail::trim(f[c_t]));
        if (!t) {
            issue("invalid timestamp '" + f[c_t] + "'");
            continue;
        }
        m.timestamp = *t;
        auto opt_count = [&](std::optional<std::size_t> col, const char* name,
                             std::optional<int>& dst) -> bool {
            if (!col) return true;
            auto s = detail::trim(f[*col]);
            if (s.empty()) return true;
            auto v = csv::parse_int<int>(s);
            if (!v || *v < 0) {
                issue(std::string("invalid ") + name + " '" + s + "'");
                return false;
            }
            dst = *v;
            return true;
        };
        if (!opt_count(c_wc, "word_count", m.word_count)) continue;
        if (!opt_count(c_pc, "positive_word_count", m.positive_word_count)) continue;
        if (m.word_count && m.positive_word_count && *m.positive_word_count > *m.word_count) {
            issue("positive_word_count exceeds word_count");
            continue;
        }
        if (c_text) m.text = f[*c_text];
        out.records.push_back(std::move(m));
    }
    return out;
}

// Collapses raw messages to first contacts, flags replies and applies the
// active-user rule. Messages are visited in stable timestamp order so ties
// within a direction go to the earlier input row.
inline MarketDataset build_market(const std::vector<UserRecord>& users,
                                  const std::vector<MessageEvent>& messages, TimeWindow window) {
    if (window.end <= window.start) throw InputError("observation window must satisfy end > start");

    MarketDataset ds;
    ds.window = window;
    auto& rep = ds.report;
    rep.input_messages = messages.size();

    std::unordered_map<std::string, std::size_t> idx;
    idx.reserve(users.size());
    for (std::size_t i = 0; i < users.size(); ++i)
        if (!idx.emplace(users[i].user_id, i).second)
            throw InputError("duplicate user_id '" + users[i].user_id + "'");

    std::vector<std::size_t> order(messages.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return messages[a].timestamp < messages[b].timestamp;
    });

    auto pair_key = [](std::size_t a, std::size_t b) {
        return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
    };
    std::unordered_map<std::uint64_t, std::size_t> first; // directed pair -> first_contacts index
    first.reserve(messages.size());
    std::vector<std::pair<std::size_t, std::size_t>> ends;
    std::vector<char> active(users.size(), 0);

    for (auto k : order) {
        const auto& m = messages[k];
        if (!window.contains(m.timestamp)) {
            ++rep.outside_window;
            continue;
        }
        if (m.sender_id == m.receiver_id) {
            ++rep.self_messages;
            continue;
        }
        auto s = idx.find(m.sender_id);
        auto r = idx.find(m.receiver_id);
        if (s == idx.end() || r == idx.end()) {
            ++rep.unknown_user;
            continue;
        }
        if (users[s->second].sex == users[r->second].sex) {
            ++rep.same_sex;
            continue;
        }
        if (!first.emplace(pair_key(s->second, r->second), ds.first_contacts.size()).second) {
            ++rep.duplicate;
            continue;
        }
        ds.first_contacts.push_back(FirstContact{m, false, true});
        ends.emplace_back(s->second, r->second);
        active[s->second] = active[r->second] = 1;
    }
    rep.retained = ds.first_contacts.size();

    for (std::size_t i = 0; i < ds.first_contacts.size(); ++i) {
        auto it = first.find(pair_key(ends[i].second, ends[i].first));
        if (it == first.end()) continue;
        auto t = ds.first_contacts[i].message.timestamp;
        auto t_rev = ds.first_contacts[it->second].message.timestamp;
        ds.first_contacts[i].replied = t_rev > t;
        ds.first_contacts[i].initiation = !(t_rev < t);
    }

    for (std::size_t i = 0; i < users.size(); ++i) {
        if (active[i]) ds.users.push_back(users[i]);
        else ++rep.inactive_users;
    }
    return ds;
}

// Per-sex descriptive statistics in the layout of the city summary table.
struct SexSummary {
    std::size_t users = 0;
    std::map<std::string, double> ethnicity_pct;
    double college_pct = 0;
    double children_pct = 0;
    double mean_age = 0;
    double mean_messages_sent = 0;
    double replies_received_pct = 0;
    std::size_t messages_sent = 0;
    std::size_t replies_received = 0;
};

struct MarketSummary {
    SexSummary men;
    SexSummary women;
};

inline bool truthy(std::string_view v) {
    auto s = detail::lower(v);
    return s == "1" || s == "yes" || s == "true" || s == "y";
}

inline MarketSummary market_summary(const MarketDataset& ds) {
    MarketSummary out;
    auto idx = ds.user_index();
    auto pick = [&](Sex s) -> SexSummary& { return s == Sex::male ? out.men : out.women; };

    struct Acc {
        double age = 0;
        std::size_t college = 0, edu_known = 0, children = 0, children_known = 0;
        std::map<std::string, std::size_t> eth;
    } acc[2];

    for (const auto& u : ds.users) {
        auto& s = pick(u.sex);
        auto& a = acc[u.sex == Sex::male ? 0 : 1];
        ++s.users;
        a.age += u.age;
        ++a.eth[u.ethnicity];
        if (u.education != Education::missing) {
            ++a.edu_known;
            if (u.education != Education::no_college) ++a.college;
        }
        auto ch = u.extra_attributes.find("has_children");
        if (ch != u.extra_attributes.end() && ch->second != kMissing) {
            ++a.children_known;
            if (truthy(ch->second)) ++a.children;
        }
    }
    for (const auto& fc : ds.first_contacts) {
        if (!fc.initiation) continue;
        auto& s = pick(ds.users[idx.at(fc.message.sender_id)].sex);
        ++s.messages_sent;
        if (fc.replied) ++s.replies_received;
    }
    for (int k = 0; k < 2; ++k) {
        auto& s = k == 0 ? out.men : out.women;
        auto& a = acc[k];
        auto pct = [](std::size_t num, std::size_t den) { return den ? 100.0 * num / den : 0.0; };
        for (const auto& [label, n] : a.eth) s.ethnicity_pct[label] = pct(n, s.users);
        s.college_pct = pct(a.college, a.edu_known);
        s.children_pct = pct(a.children, a.children_known);
        s.mean_age = s.users ? a.age / s.users : 0.0;
        s.mean_messages_sent = s.users ? static_cast<double>(s.messages_sent) / s.users : 0.0;
        s.replies_received_pct = pct(s.replies_received, s.messages_sent);
    }
    return out;
}

inline nlohmann::ordered_json to_json(const SexSummary& s) {
    nlohmann::ordered_json j;
    j["Total number of users"] = s.users;
    nlohmann::ordered_json eth = nlohmann::ordered_json::object();
    for (const auto& [k, v] : s.ethnicity_pct) eth[k] = v;
    j["Ethnicity (%)"] = eth;
    j["College degree (%)"] = s.college_pct;
    j["Children at home (%)"] = s.children_pct;
    j["Mean age"] = s.mean_age;
    j["Mean messages sent"] = s.mean_messages_sent;
    j["Replies received (%)"] = s.replies_received_pct;
    return j;
}

inline nlohmann::ordered_json to_json(const MarketSummary& s, const BuildReport& r) {
    nlohmann::ordered_json j;
    j["Men"] = to_json(s.men);
    j["Women"] = to_json(s.women);
    j["build"] = {{"input_messages", r.input_messages}, {"outside_window", r.outside_window},
                  {"self_messages", r.self_messages},   {"unknown_user", r.unknown_user},
                  {"same_sex", r.same_sex},             {"duplicate", r.duplicate},
                  {"retained", r.retained},             {"inactive_users", r.inactive_users}};
    return j;
}

inline csv::Writer users_csv(const std::vector<UserRecord>& users) {
    csv::Writer w(users_csv_header());
    for (const auto& u : users) {
        auto extra = [&](const char* k) {
            auto it = u.extra_attributes.find(k);
            return it == u.extra_attributes.end() ? std::string(kMissing) : it->second;
        };
        w.add(u.user_id, to_string(u.sex), u.city, u.age, u.ethnicity, to_string(u.education),
              extra("body_type"), extra("has_children"), extra("seeking"));
    }
    return w;
}

inline csv::Writer messages_csv(const std::vector<MessageEvent>& messages) {
    csv::Writer w(messages_csv_header());
    auto opt = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string{}; };
    for (const auto& m : messages)
        w.add(m.sender_id, m.receiver_id, m.timestamp, opt(m.word_count), opt(m.positive_word_count), m.text);
    return w;
}

} // namespace dmarket
