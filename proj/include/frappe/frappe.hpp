// Copyright 2026 The FRAPPE Authors. All Rights Reserved.
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

#include "frappe/analysis.hpp"
#include "frappe/bitstream.hpp"
#include "frappe/config.hpp"
#include "frappe/entropy/codec.hpp"
#include "frappe/entropy/jpegls.hpp"
#include "frappe/error.hpp"
#include "frappe/harness.hpp"
#include "frappe/image_io.hpp"
#include "frappe/metrics.hpp"
#include "frappe/model_store.hpp"
#include "frappe/optim.hpp"
#include "frappe/synthesis.hpp"
#include "frappe/trainer.hpp"
