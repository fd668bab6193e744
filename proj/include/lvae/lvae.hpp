#pragma once

#include "lvae/collapse.hpp"
#include "lvae/dataset.hpp"
#include "lvae/errors.hpp"
#include "lvae/identifiability.hpp"
#include "lvae/io.hpp"
#include "lvae/landscape.hpp"
#include "lvae/linalg.hpp"
#include "lvae/linear_vae.hpp"
#include "lvae/parallel.hpp"
#include "lvae/ppca.hpp"
#include "lvae/training.hpp"
