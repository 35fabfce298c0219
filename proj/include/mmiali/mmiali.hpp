// Copyright 2026 The mmiali Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "mmiali/autodiff.hpp"
#include "mmiali/checkpoint.hpp"
#include "mmiali/config.hpp"
#include "mmiali/ensemble.hpp"
#include "mmiali/experiment.hpp"
#include "mmiali/io.hpp"
#include "mmiali/losses.hpp"
#include "mmiali/metrics.hpp"
#include "mmiali/networks.hpp"
#include "mmiali/rng.hpp"
#include "mmiali/synthetic.hpp"
#include "mmiali/tensor.hpp"
#include "mmiali/trainer.hpp"
