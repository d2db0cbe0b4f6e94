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

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trapz/receipt.hpp"

namespace trapz::scoring {

/// Per-record scores, one in [0, 1] per entity.
struct EntityScores {
    double vendor{0};
    double date{0};
    double list_items{0};
    double subtotal{0};
    double tax{0};
    double total{0};
    double payment{0};
    double change{0};

    static constexpr std::array<const char*, 8> names() {
        return {"vendor", "date", "list_items", "subtotal", "tax",
                "total",  "payment", "change"};
    }
    std::array<double, 8> values() const {
        return {vendor, date, list_items, subtotal, tax, total, payment, change};
    }
};

/// 1 when both values are absent or numerically equal, else 0. Equality is
/// on parsed values, so 71.40 and 71.4 match.
double numeric_score(const std::optional<double>& truth, const std::optional<double>& pred);

/// Jaro similarity with the Winkler common-prefix boost (prefix capped at 4,
/// weight 0.1). 1 iff the strings are equal; comparison is case-sensitive.
double jaro_winkler(std::string_view a, std::string_view b);

/// Reading-order list comparison: items are paired positionally from the
/// top, each pair scores the mean of name similarity and the two numeric
/// checks, unpaired positions score 0, and the sum is divided by the longer
/// length. Two empty lists score 1.
double list_items_score(const std::vector<dataset::LineItem>& truth,
                        const std::vector<dataset::LineItem>& pred);

/// All eight entity scores for a prediction against the truth. Dates are
/// normalized to YYYY-mm-dd on both sides before comparison when they parse
/// as calendar dates.
EntityScores receipt_scores(const dataset::ReceiptRecord& truth,
                            const dataset::ReceiptRecord& pred);

/// Unweighted mean of the eight entity scores.
double average_score(const EntityScores& scores);

/// One line of the scores file.
struct ScoreRecord {
    std::string source_id;
    double theta_deg{0};
    double r{1};
    EntityScores scores;
    double average{0};
    std::string status;  // extraction status the scores were computed under
};

void save_scores(const std::vector<ScoreRecord>& records, const std::filesystem::path& path);
std::vector<ScoreRecord> load_scores(const std::filesystem::path& path);

}  // namespace trapz::scoring
