// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "tempadapt/pos.hpp"

#include <string>

#include "tempadapt/error.hpp"

namespace tempadapt {

std::string_view to_string(Pos pos) {
  switch (pos) {
    case Pos::kNone: return "NONE";
    case Pos::kPropn: return "PROPN";
    case Pos::kNoun: return "NOUN";
    case Pos::kVerb: return "VERB";
    case Pos::kAdj: return "ADJ";
    case Pos::kAdv: return "ADV";
    case Pos::kDet: return "DET";
    case Pos::kConj: return "CONJ";
    case Pos::kPron: return "PRON";
  }
  return "NONE";
}

Pos parse_pos(std::string_view tag) {
  if (tag == "NONE") return Pos::kNone;
  for (Pos p : kAllPos) {
    if (to_string(p) == tag) return p;
  }
  throw DataError("POS tag '" + std::string(tag) + "' is outside the closed tag set");
}

}  // namespace tempadapt
