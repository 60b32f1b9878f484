#pragma once

#include "metaslicing/errors.hpp"
#include "metaslicing/resource_vector.hpp"
#include "metaslicing/similarity.hpp"
#include "metaslicing/resource_manager.hpp"
#include "metaslicing/reward_metrics.hpp"
#include "metaslicing/scenario.hpp"
#include "metaslicing/state.hpp"
#include "metaslicing/neural_net.hpp"
#include "metaslicing/policies.hpp"
#include "metaslicing/event_engine.hpp"
#include "metaslicing/smdp_oracle.hpp"
#include "metaslicing/imsac_agent.hpp"
#include "metaslicing/experiment.hpp"
