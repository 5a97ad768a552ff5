#pragma once

#include "attentrack/assignment.hpp"
#include "attentrack/error.hpp"
#include "attentrack/evaluate.hpp"
#include "attentrack/events.hpp"
#include "attentrack/geometry.hpp"
#include "attentrack/kalman.hpp"
#include "attentrack/model_math.hpp"
#include "attentrack/recognition.hpp"
#include "attentrack/run.hpp"
#include "attentrack/scene.hpp"
#include "attentrack/session.hpp"
#include "attentrack/sort_tracker.hpp"
#include "attentrack/stream.hpp"
