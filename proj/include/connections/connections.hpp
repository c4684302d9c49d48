// Copyright 2026 The Connections Workbench Authors
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

#pragma once

#include "connections/chat_client.hpp"
#include "connections/clock.hpp"
#include "connections/embedding.hpp"
#include "connections/error.hpp"
#include "connections/game.hpp"
#include "connections/generation.hpp"
#include "connections/metrics.hpp"
#include "connections/puzzle.hpp"
#include "connections/record.hpp"
#include "connections/server.hpp"
#include "connections/study.hpp"
#include "connections/word.hpp"
