#pragma once

#include "physr/error.hpp"
#include "physr/rng.hpp"
#include "physr/text.hpp"
#include "physr/ontology.hpp"
#include "physr/mcq.hpp"
#include "physr/dataset.hpp"
#include "physr/taskgen.hpp"
#include "physr/reward.hpp"
#include "physr/rollout.hpp"
#include "physr/mock_endpoint.hpp"
#include "physr/evalharness.hpp"
#include "physr/dispatch.hpp"
#include "physr/grpo_loop.hpp"
#include "physr/synthetic.hpp"
#include "physr/toml.hpp"
