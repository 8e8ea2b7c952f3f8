// Copyright 2026 The aplclock Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef APLCLOCK_APLCLOCK_HPP
#define APLCLOCK_APLCLOCK_HPP

#include "aplclock/analysis.hpp"
#include "aplclock/config.hpp"
#include "aplclock/diffusion.hpp"
#include "aplclock/ensemble.hpp"
#include "aplclock/errors.hpp"
#include "aplclock/harness.hpp"
#include "aplclock/numeric.hpp"
#include "aplclock/oscillator.hpp"
#include "aplclock/parallel.hpp"
#include "aplclock/random.hpp"
#include "aplclock/sequences.hpp"
#include "aplclock/stability.hpp"

#endif
