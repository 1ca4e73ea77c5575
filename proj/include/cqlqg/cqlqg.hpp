#pragma once

#include "cqlqg/cost.hpp"
#include "cqlqg/descent.hpp"
#include "cqlqg/errors.hpp"
#include "cqlqg/fixture.hpp"
#include "cqlqg/io.hpp"
#include "cqlqg/linalg.hpp"
#include "cqlqg/model.hpp"
