#pragma once

#include "groundprobe/ablation.hpp"
#include "groundprobe/error.hpp"
#include "groundprobe/feature_store.hpp"
#include "groundprobe/hpo.hpp"
#include "groundprobe/loss.hpp"
#include "groundprobe/metrics.hpp"
#include "groundprobe/optim.hpp"
#include "groundprobe/probe.hpp"
#include "groundprobe/rng.hpp"
#include "groundprobe/stats.hpp"
#include "groundprobe/synthgen.hpp"
#include "groundprobe/train.hpp"
