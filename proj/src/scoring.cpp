/*
 * Copyright (c) 2026, the trapzbench authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "trapz/scoring.hpp"

#include <algorithm>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "trapz/errors.hpp"

namespace trapz::scoring {

using dataset::LineItem;
using dataset::ReceiptRecord;
using nlohmann::json;

double numeric_score(const std::optional<double>& truth, const std::optional<double>& pred) {
    if (!truth && !pred) return 1.0;
    if (!truth || !pred) return 0.0;
    return *truth == *pred ? 1.0 : 0.0;
}

double jaro_winkler(std::string_view a, std::string_view b) {
    const std::size_t la = a.size();
    const std::size_t lb = b.size();
    if (la == 0 && lb == 0) return 1.0;
    if (la == 0 || lb == 0) return 0.0;

    const std::size_t longest = std::max(la, lb);
    const std::size_t window = longest / 2 > 0 ? longest / 2 - 1 : 0;

    std::vector<bool> a_matched(la, false);
    std::vector<bool> b_matched(lb, false);
    std::size_t matches = 0;
    for (std::size_t i = 0; i < la; ++i) {
        const std::size_t lo = i > window ? i - window : 0;
        const std::size_t hi = std::min(lb, i + window + 1);
        for (std::size_t j = lo; j < hi; ++j) {
            if (!b_matched[j] && a[i] == b[j]) {
                a_matched[i] = true;
                b_matched[j] = true;
                ++matches;
                break;
            }
        }
    }
    if (matches == 0) return 0.0;

    // Half the number of matched characters that appear in a different order.
    std::size_t out_of_order = 0;
    std::size_t j = 0;
    for (std::size_t i = 0; i < la; ++i) {
        if (!a_matched[i]) continue;
        while (!b_matched[j]) ++j;
        if (a[i] != b[j]) ++out_of_order;
        ++j;
    }
    const double m = static_cast<double>(matches);
    const double t = static_cast<double>(out_of_order) / 2.0;
    const double jaro = (m / la + m / lb + (m - t) / m) / 3.0;

    std::size_t prefix = 0;
    while (prefix < std::min({la, lb, std::size_t{4}}) && a[prefix] == b[prefix]) ++prefix;
    return jaro + static_cast<double>(prefix) * 0.1 * (1.0 - jaro);
}

namespace {

double optional_string_score(const std::optional<std::string>& truth,
                             const std::optional<std::string>& pred) {
    if (!truth && !pred) return 1.0;
    if (!truth || !pred) return 0.0;
    return jaro_winkler(*truth, *pred);
}

double date_score(const std::optional<std::string>& truth, const std::optional<std::string>& pred) {
    auto canonical = [](const std::optional<std::string>& v) -> std::optional<std::string> {
        if (!v) return std::nullopt;
        if (auto norm = dataset::normalize_date(*v)) return norm;
        return v;
    };
    return optional_string_score(canonical(truth), canonical(pred));
}

double pair_score(const LineItem& truth, const LineItem& pred) {
    const double name = optional_string_score(truth.item, pred.item);
    const double quantity = numeric_score(truth.quantity, pred.quantity);
    const double price = numeric_score(truth.price, pred.price);
    return (name + quantity + price) / 3.0;
}

}  // namespace

double list_items_score(const std::vector<LineItem>& truth, const std::vector<LineItem>& pred) {
    const std::size_t n = std::max(truth.size(), pred.size());
    if (n == 0) return 1.0;
    double sum = 0.0;
    const std::size_t paired = std::min(truth.size(), pred.size());
    for (std::size_t i = 0; i < paired; ++i) sum += pair_score(truth[i], pred[i]);
    return sum / static_cast<double>(n);
}

EntityScores receipt_scores(const ReceiptRecord& truth, const ReceiptRecord& pred) {
    EntityScores s;
    s.vendor = optional_string_score(truth.vendor, pred.vendor);
    s.date = date_score(truth.date, pred.date);
    s.list_items = list_items_score(truth.list_items, pred.list_items);
    s.subtotal = numeric_score(truth.subtotal, pred.subtotal);
    s.tax = numeric_score(truth.tax, pred.tax);
    s.total = numeric_score(truth.total, pred.total);
    s.payment = numeric_score(truth.payment, pred.payment);
    s.change = numeric_score(truth.change, pred.change);
    return s;
}

double average_score(const EntityScores& scores) {
    double sum = 0.0;
    for (double v : scores.values()) sum += v;
    return sum / 8.0;
}

void save_scores(const std::vector<ScoreRecord>& records, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error("cannot write scores file: " + path.string());
        for (const ScoreRecord& r : records) {
            json j{{"source_id", r.source_id},
                   {"theta_deg", r.theta_deg},
                   {"r", r.r},
                   {"average", r.average},
                   {"status", r.status}};
            const auto names = EntityScores::names();
            const auto values = r.scores.values();
            for (std::size_t i = 0; i < names.size(); ++i) j[names[i]] = values[i];
            out << j.dump() << '\n';
        }
    }
    std::filesystem::rename(tmp, path);
}

std::vector<ScoreRecord> load_scores(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open scores file: " + path.string());
    std::vector<ScoreRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error("scores file " + path.string() + " line " + std::to_string(lineno) +
                        ": " + e.what());
        }
        ScoreRecord r;
        r.source_id = j.at("source_id").get<std::string>();
        r.theta_deg = j.at("theta_deg").get<double>();
        r.r = j.at("r").get<double>();
        r.average = j.at("average").get<double>();
        r.status = j.value("status", "ok");
        r.scores.vendor = j.at("vendor").get<double>();
        r.scores.date = j.at("date").get<double>();
        r.scores.list_items = j.at("list_items").get<double>();
        r.scores.subtotal = j.at("subtotal").get<double>();
        r.scores.tax = j.at("tax").get<double>();
        r.scores.total = j.at("total").get<double>();
        r.scores.payment = j.at("payment").get<double>();
        r.scores.change = j.at("change").get<double>();
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace trapz::scoring
