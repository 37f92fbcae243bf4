// Copyright 2026 The FGU Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "fgu/common.hpp"
#include "fgu/experiment.hpp"
#include "fgu/fairness.hpp"
#include "fgu/gcn.hpp"
#include "fgu/graph.hpp"
#include "fgu/mia.hpp"
#include "fgu/partition.hpp"
#include "fgu/request.hpp"
#include "fgu/trainer.hpp"
#include "fgu/unlearn.hpp"
