#pragma once

#include "raysolve/chebyshev.hpp"
#include "raysolve/discretization.hpp"
#include "raysolve/error.hpp"
#include "raysolve/fmm.hpp"
#include "raysolve/fourier.hpp"
#include "raysolve/geometry.hpp"
#include "raysolve/gmres.hpp"
#include "raysolve/io.hpp"
#include "raysolve/kernel.hpp"
#include "raysolve/medium.hpp"
#include "raysolve/oracle.hpp"
#include "raysolve/runner.hpp"
#include "raysolve/sampled_field.hpp"
#include "raysolve/scenario.hpp"
#include "raysolve/solver.hpp"
#include "raysolve/transport.hpp"
