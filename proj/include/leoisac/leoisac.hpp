// SPDX-License-Identifier: Apache-2.0
//
// leoisac: cooperative communication and location sensing for LEO constellations
// ------------------------------------------------------------------------
//
// Umbrella header.
#pragma once

#include "leoisac/beamform.hpp"
#include "leoisac/channel.hpp"
#include "leoisac/conic.hpp"
#include "leoisac/core.hpp"
#include "leoisac/crb.hpp"
#include "leoisac/geometry.hpp"
#include "leoisac/harness.hpp"
#include "leoisac/localization.hpp"
#include "leoisac/scene.hpp"
#include "leoisac/signal_model.hpp"
