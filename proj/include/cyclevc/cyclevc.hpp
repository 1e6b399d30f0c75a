#pragma once

#include "cyclevc/archive.hpp"
#include "cyclevc/autograd.hpp"
#include "cyclevc/conversion.hpp"
#include "cyclevc/error.hpp"
#include "cyclevc/feature_io.hpp"
#include "cyclevc/features.hpp"
#include "cyclevc/losses.hpp"
#include "cyclevc/metrics.hpp"
#include "cyclevc/model.hpp"
#include "cyclevc/rng.hpp"
#include "cyclevc/tensor.hpp"
#include "cyclevc/training.hpp"
#include "cyclevc/vocoder.hpp"
