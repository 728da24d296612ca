#pragma once

#include "vicsek/config.hpp"
#include "vicsek/errors.hpp"
#include "vicsek/experiments.hpp"
#include "vicsek/field.hpp"
#include "vicsek/kinetic_solver.hpp"
#include "vicsek/model.hpp"
#include "vicsek/particle_sim.hpp"
#include "vicsek/rng.hpp"
#include "vicsek/snapshot.hpp"
#include "vicsek/sphere_calculus.hpp"
#include "vicsek/transport.hpp"
