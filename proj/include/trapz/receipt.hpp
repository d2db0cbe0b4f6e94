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

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace trapz::dataset {

/// One line item of a receipt. All parts may be absent in model predictions;
/// ground truth requires at least non-negative quantities.
struct LineItem {
    std::optional<std::string> item;
    std::optional<double> quantity;
    std::optional<double> price;

    friend bool operator==(const LineItem&, const LineItem&) = default;
};

/// The eight-entity structured record, used both for ground truth and for
/// parsed model predictions. Absent entities are null.
struct ReceiptRecord {
    std::optional<std::string> vendor;
    std::optional<std::string> date;  // YYYY-mm-dd for validated truth
    std::vector<LineItem> list_items; // preserves top-to-bottom order
    std::optional<double> subtotal;
    std::optional<double> tax;
    std::optional<double> total;
    std::optional<double> payment;
    std::optional<double> change;

    friend bool operator==(const ReceiptRecord&, const ReceiptRecord&) = default;
};

/// Serializes with the canonical field names (Vendor, Date, List items with
/// Item/Quantity/Price, Subtotal, Tax, Total, Payment, Change); absent
/// values are emitted as null.
nlohmann::json to_json(const ReceiptRecord& record);

/// Strict mapping used for ground truth: exact field names, numbers must be
/// JSON numbers, dates must be valid YYYY-mm-dd, quantities >= 0. Throws
/// TruthParseError with field context.
ReceiptRecord record_from_truth_json(const nlohmann::json& j, const std::string& context);

/// Lenient mapping used for model output: keys matched ignoring case and
/// separators, numeric strings coerced (currency symbols and thousands
/// separators stripped), anything unusable becomes null.
ReceiptRecord record_from_model_json(const nlohmann::json& j);

/// Loads and validates a ground-truth file. Throws TruthParseError on
/// malformed JSON (with byte offset) or contract violations.
ReceiptRecord load_truth(const std::filesystem::path& path);

/// Renders a date as YYYY-mm-dd when the input parses as a calendar date in
/// Y-m-d or Y/m/d order; returns nullopt otherwise.
std::optional<std::string> normalize_date(const std::string& raw);

}  // namespace trapz::dataset
