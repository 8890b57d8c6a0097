#pragma once

#include <filesystem>

#include "sfaguard/corpus.hpp"

namespace sfaguard {

/// 16-bit signed PCM, mono. Anything else raises FormatError.
Waveform read_wav(const std::filesystem::path& path);

/// Quantizes to 16-bit PCM with full scale 32767; samples outside [-1, 1]
/// are saturated.
void write_wav(const std::filesystem::path& path, const Waveform& wave);

}  // namespace sfaguard
