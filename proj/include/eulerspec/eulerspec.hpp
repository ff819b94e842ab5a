#pragma once

#include "eulerspec/domain.hpp"
#include "eulerspec/error.hpp"
#include "eulerspec/flow_topology.hpp"
#include "eulerspec/geometry.hpp"
#include "eulerspec/operator_lab.hpp"
#include "eulerspec/period.hpp"
#include "eulerspec/pipeline.hpp"
#include "eulerspec/serialize.hpp"
#include "eulerspec/spectrum.hpp"
#include "eulerspec/stream_field.hpp"
