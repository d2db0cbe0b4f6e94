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

#include "trapz/receipt.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>

#include "trapz/errors.hpp"

namespace trapz::dataset {

using nlohmann::json;

namespace {

json opt_to_json(const std::optional<std::string>& v) {
    return v ? json(*v) : json(nullptr);
}

json opt_to_json(const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
}

bool leap_year(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
    static constexpr int kDays[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && leap_year(y)) return 29;
    return kDays[m - 1];
}

bool valid_date(int y, int m, int d) {
    return y >= 1 && y <= 9999 && m >= 1 && m <= 12 && d >= 1 && d <= days_in_month(y, m);
}

// Exact YYYY-mm-dd: four digits, dash, two digits, dash, two digits.
bool strict_iso_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u}) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    }
    const int y = std::stoi(s.substr(0, 4));
    const int m = std::stoi(s.substr(5, 2));
    const int d = std::stoi(s.substr(8, 2));
    return valid_date(y, m, d);
}

double require_finite_number(const json& v, const std::string& field, const std::string& context) {
    if (!v.is_number()) {
        throw TruthParseError(context + ": field '" + field + "' must be a number");
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
        throw TruthParseError(context + ": field '" + field + "' is not finite");
    }
    return d;
}

std::string normalize_key(const std::string& key) {
    std::string out;
    out.reserve(key.size());
    for (char ch : key) {
        if (ch == ' ' || ch == '_' || ch == '-') continue;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    return out;
}

const json* find_lenient(const json& obj, const char* canonical) {
    const std::string wanted = normalize_key(canonical);
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (normalize_key(it.key()) == wanted) return &it.value();
    }
    return nullptr;
}

// Strips currency symbols, grouping commas, and whitespace, then parses the
// remaining decimal. Returns nullopt when nothing parseable is left.
std::optional<double> coerce_number(const json& v) {
    if (v.is_number()) {
        const double d = v.get<double>();
        return std::isfinite(d) ? std::optional<double>(d) : std::nullopt;
    }
    if (!v.is_string()) return std::nullopt;
    std::string cleaned;
    for (unsigned char ch : v.get<std::string>()) {
        if (std::isdigit(ch) || ch == '.' || ch == '-' || ch == '+') {
            cleaned.push_back(static_cast<char>(ch));
        } else if (ch == ',' || std::isspace(ch) || ch == '$' || ch == 0xA3 || ch == 0xA5) {
            continue;  // grouping separators and single-byte currency marks
        } else if ((ch & 0x80) != 0) {
            continue;  // multi-byte currency symbols and the like
        } else {
            return std::nullopt;
        }
    }
    if (cleaned.empty()) return std::nullopt;
    double value = 0.0;
    const auto* begin = cleaned.data();
    const auto* end = cleaned.data() + cleaned.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || !std::isfinite(value)) return std::nullopt;
    return value;
}

std::optional<std::string> coerce_string(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) {
        json num = v;
        return num.dump();
    }
    return std::nullopt;
}

}  // namespace

json to_json(const ReceiptRecord& record) {
    json items = json::array();
    for (const LineItem& it : record.list_items) {
        items.push_back({{"Item", opt_to_json(it.item)},
                         {"Quantity", opt_to_json(it.quantity)},
                         {"Price", opt_to_json(it.price)}});
    }
    return json{{"Vendor", opt_to_json(record.vendor)},
                {"Date", opt_to_json(record.date)},
                {"List items", items},
                {"Subtotal", opt_to_json(record.subtotal)},
                {"Tax", opt_to_json(record.tax)},
                {"Total", opt_to_json(record.total)},
                {"Payment", opt_to_json(record.payment)},
                {"Change", opt_to_json(record.change)}};
}

ReceiptRecord record_from_truth_json(const json& j, const std::string& context) {
    if (!j.is_object()) {
        throw TruthParseError(context + ": top level must be an object");
    }
    ReceiptRecord rec;

    auto get = [&](const char* key) -> const json* {
        auto it = j.find(key);
        if (it == j.end() || it->is_null()) return nullptr;
        return &*it;
    };

    if (const json* v = get("Vendor")) {
        if (!v->is_string()) throw TruthParseError(context + ": field 'Vendor' must be a string");
        rec.vendor = v->get<std::string>();
    }
    if (const json* v = get("Date")) {
        if (!v->is_string()) throw TruthParseError(context + ": field 'Date' must be a string");
        const std::string date = v->get<std::string>();
        if (!strict_iso_date(date)) {
            throw TruthParseError(context + ": field 'Date' must be a valid YYYY-mm-dd date, got '" +
                                  date + "'");
        }
        rec.date = date;
    }
    if (const json* v = get("List items")) {
        if (!v->is_array()) {
            throw TruthParseError(context + ": field 'List items' must be an array");
        }
        for (std::size_t i = 0; i < v->size(); ++i) {
            const json& e = (*v)[i];
            const std::string item_ctx = context + ": list item " + std::to_string(i);
            if (!e.is_object()) throw TruthParseError(item_ctx + " must be an object");
            LineItem li;
            if (auto it = e.find("Item"); it != e.end() && !it->is_null()) {
                if (!it->is_string()) throw TruthParseError(item_ctx + ": 'Item' must be a string");
                li.item = it->get<std::string>();
            }
            if (auto it = e.find("Quantity"); it != e.end() && !it->is_null()) {
                const double q = require_finite_number(*it, "Quantity", item_ctx);
                if (q < 0) throw TruthParseError(item_ctx + ": 'Quantity' must be >= 0");
                li.quantity = q;
            }
            if (auto it = e.find("Price"); it != e.end() && !it->is_null()) {
                li.price = require_finite_number(*it, "Price", item_ctx);
            }
            rec.list_items.push_back(std::move(li));
        }
    }
    const std::pair<const char*, std::optional<double> ReceiptRecord::*> money[] = {
        {"Subtotal", &ReceiptRecord::subtotal}, {"Tax", &ReceiptRecord::tax},
        {"Total", &ReceiptRecord::total},       {"Payment", &ReceiptRecord::payment},
        {"Change", &ReceiptRecord::change}};
    for (const auto& [key, member] : money) {
        if (const json* v = get(key)) {
            rec.*member = require_finite_number(*v, key, context);
        }
    }
    return rec;
}

ReceiptRecord record_from_model_json(const json& j) {
    ReceiptRecord rec;
    if (!j.is_object()) return rec;

    if (const json* v = find_lenient(j, "Vendor"); v && !v->is_null()) {
        rec.vendor = coerce_string(*v);
    }
    if (const json* v = find_lenient(j, "Date"); v && !v->is_null()) {
        rec.date = coerce_string(*v);
    }
    if (const json* v = find_lenient(j, "List items"); v && v->is_array()) {
        for (const json& e : *v) {
            LineItem li;
            if (e.is_object()) {
                if (const json* f = find_lenient(e, "Item"); f && !f->is_null())
                    li.item = coerce_string(*f);
                if (const json* f = find_lenient(e, "Quantity"); f && !f->is_null())
                    li.quantity = coerce_number(*f);
                if (const json* f = find_lenient(e, "Price"); f && !f->is_null())
                    li.price = coerce_number(*f);
            }
            rec.list_items.push_back(std::move(li));
        }
    }
    const std::pair<const char*, std::optional<double> ReceiptRecord::*> money[] = {
        {"Subtotal", &ReceiptRecord::subtotal}, {"Tax", &ReceiptRecord::tax},
        {"Total", &ReceiptRecord::total},       {"Payment", &ReceiptRecord::payment},
        {"Change", &ReceiptRecord::change}};
    for (const auto& [key, member] : money) {
        if (const json* v = find_lenient(j, key); v && !v->is_null()) {
            rec.*member = coerce_number(*v);
        }
    }
    return rec;
}

ReceiptRecord load_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw TruthParseError("cannot open ground-truth file: " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw TruthParseError("malformed ground truth in " + path.string() + ": " + e.what());
    }
    return record_from_truth_json(j, path.string());
}

std::optional<std::string> normalize_date(const std::string& raw) {
    // Accept Y-m-d or Y/m/d with 1-2 digit month and day.
    int part[3] = {0, 0, 0};
    int digits[3] = {0, 0, 0};
    int field = 0;
    char sep = 0;
    for (char ch : raw) {
        if (std::isdigit(static_cast<unsigned char>(ch))) {
            if (digits[field] >= 4) return std::nullopt;
            part[field] = part[field] * 10 + (ch - '0');
            ++digits[field];
        } else if (ch == '-' || ch == '/') {
            if (sep == 0) sep = ch;
            if (ch != sep || digits[field] == 0 || field == 2) return std::nullopt;
            ++field;
        } else {
            return std::nullopt;
        }
    }
    if (field != 2 || digits[0] != 4 || digits[1] == 0 || digits[2] == 0) return std::nullopt;
    if (!valid_date(part[0], part[1], part[2])) return std::nullopt;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", part[0], part[1], part[2]);
    return std::string(buf);
}

}  // namespace trapz::dataset
