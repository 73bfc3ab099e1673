#pragma once

#include "teachirl/errors.hpp"
#include "teachirl/random.hpp"
#include "teachirl/mdp.hpp"
#include "teachirl/car_env.hpp"
#include "teachirl/car_env_json.hpp"
#include "teachirl/learner.hpp"
#include "teachirl/irl.hpp"
#include "teachirl/parallel.hpp"
#include "teachirl/active.hpp"
#include "teachirl/teaching.hpp"
#include "teachirl/harness.hpp"
