// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string_view>

namespace tempadapt {

/// Closed part-of-speech inventory shared by the generator, the tokenizer
/// alignment step and the attribution analyses. kNone marks special tokens.
enum class Pos { kNone, kPropn, kNoun, kVerb, kAdj, kAdv, kDet, kConj, kPron };

inline constexpr std::array<Pos, 8> kAllPos = {Pos::kPropn, Pos::kNoun, Pos::kVerb, Pos::kAdj,
                                               Pos::kAdv,   Pos::kDet,  Pos::kConj, Pos::kPron};

std::string_view to_string(Pos pos);
/// Throws DataError for tags outside the inventory.
Pos parse_pos(std::string_view tag);

}  // namespace tempadapt
