#pragma once

#include "rcl/consensus.hpp"
#include "rcl/curriculum.hpp"
#include "rcl/data.hpp"
#include "rcl/error.hpp"
#include "rcl/labeling.hpp"
#include "rcl/metrics.hpp"
#include "rcl/pipeline.hpp"
#include "rcl/random.hpp"
#include "rcl/student.hpp"
#include "rcl/text_match.hpp"
