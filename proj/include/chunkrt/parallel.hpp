#pragma once

#include <string>

namespace chunkrt {

/// Selects between the OpenMP kernel and the serial reference loop. Both
/// produce bitwise-identical results; reductions are always done serially.
enum class Exec { serial, parallel };

int max_threads();
std::string parallel_backend();

}  // namespace chunkrt
