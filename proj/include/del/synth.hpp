#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "del/data.hpp"

namespace del {

// Deterministic synthetic dialogue corpus. The label is decided by an
// emotion keyword placed in turn 3; a negation marker in turn 1 flips the
// mapping (happy<->sad, angry<->others). All other tokens are neutral
// distractors and every turn is padded to 10-20 tokens, so a classifier
// has to combine turn 3 with the turn-1 context to score well.
std::vector<Dialogue> synth_corpus(int n, uint64_t seed,
                                   const std::string& id_prefix = "syn");

}  // namespace del
