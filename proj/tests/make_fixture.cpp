// SPDX-License-Identifier: Apache-2.0
// Writes one synthetic voice item as a float32 WAV: make_fixture <out.wav> <seconds>.
#include <iostream>
#include <string>

#include "dpsaudio/synth.hpp"
#include "dpsaudio/wav.hpp"

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: make_fixture <out.wav> <seconds>\n";
    return 1;
  }
  dpsaudio::SyntheticVoiceSpec spec;
  spec.n_items = 1;
  spec.duration_s = std::stod(argv[2]);
  const auto items = dpsaudio::synth_corpus(spec, 42);
  dpsaudio::save_wav(items.front().signal, argv[1], dpsaudio::WavEncoding::float32);
  return 0;
}
