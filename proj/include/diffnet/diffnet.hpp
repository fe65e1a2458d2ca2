#pragma once

#include "diffnet/error.hpp"
#include "diffnet/explicit_block.hpp"
#include "diffnet/flux.hpp"
#include "diffnet/fsi.hpp"
#include "diffnet/implicit.hpp"
#include "diffnet/multigrid.hpp"
#include "diffnet/operators.hpp"
#include "diffnet/random.hpp"
#include "diffnet/signal.hpp"
