// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dpsaudio/acceptance.hpp"
#include "dpsaudio/config.hpp"
#include "dpsaudio/degradation.hpp"
#include "dpsaudio/denoiser.hpp"
#include "dpsaudio/fft.hpp"
#include "dpsaudio/guidance.hpp"
#include "dpsaudio/harness.hpp"
#include "dpsaudio/metrics.hpp"
#include "dpsaudio/sampler.hpp"
#include "dpsaudio/schedule.hpp"
#include "dpsaudio/signal.hpp"
#include "dpsaudio/synth.hpp"
#include "dpsaudio/wav.hpp"
