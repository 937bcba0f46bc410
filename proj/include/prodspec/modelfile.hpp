#pragma once

#include <string>

#include "prodspec/model.hpp"

namespace prodspec {

// Model document grammar (text, UTF-8, '#' comments):
//
//   model {
//     factors [
//       cue_sum { weights: [0.70710678+0i, 0.70710678+0i] }
//       ginibre { sigma: 1.0, rows: 2, cols: 1 }
//     ]
//   }
//
// Complex literals use the 'i' suffix: a, ai, a+bi, a-bi. rows/cols are
// positive integers at a reference outer size; the chain is normalized to the
// final column dimension. CUE-sum factors are square and inherit their
// position's dimension. Parse failures carry line/column.
ValidatedModel parse_model_document(const std::string& text);

ValidatedModel load_model_file(const std::string& path);

} // namespace prodspec
