// Copyright 2026 The thermolearn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef THERMOLEARN_HPP
#define THERMOLEARN_HPP

#include "thermolearn/errors.hpp"
#include "thermolearn/rng.hpp"
#include "thermolearn/numeric.hpp"
#include "thermolearn/model.hpp"
#include "thermolearn/data.hpp"
#include "thermolearn/optimizer.hpp"
#include "thermolearn/thermo.hpp"
#include "thermolearn/info.hpp"
#include "thermolearn/sampler.hpp"
#include "thermolearn/classifier.hpp"
#include "thermolearn/noise.hpp"
#include "thermolearn/csv.hpp"
#include "thermolearn/config.hpp"
#include "thermolearn/parallel.hpp"
#include "thermolearn/runner.hpp"

#endif  // THERMOLEARN_HPP
