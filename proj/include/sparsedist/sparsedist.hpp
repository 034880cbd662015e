// Copyright 2026 The sparsedist Authors
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

#pragma once

#include "sparsedist/random.hpp"
#include "sparsedist/core.hpp"
#include "sparsedist/estimation.hpp"
#include "sparsedist/scheme_a.hpp"
#include "sparsedist/scheme_b.hpp"
#include "sparsedist/group_testing.hpp"
#include "sparsedist/scheme_d.hpp"
#include "sparsedist/pipeline.hpp"
#include "sparsedist/harness.hpp"
