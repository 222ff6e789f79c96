#pragma once

#include "aisensei/error.hpp"
#include "aisensei/eval_metrics.hpp"
#include "aisensei/experiment.hpp"
#include "aisensei/kgraph.hpp"
#include "aisensei/llm_gateway.hpp"
#include "aisensei/prompt.hpp"
#include "aisensei/student_model.hpp"
#include "aisensei/tutor_http.hpp"
#include "aisensei/tutor_service.hpp"
