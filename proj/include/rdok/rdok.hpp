#pragma once

#include "rdok/bits.hpp"
#include "rdok/codec.hpp"
#include "rdok/dct.hpp"
#include "rdok/entropy.hpp"
#include "rdok/errors.hpp"
#include "rdok/image_io.hpp"
#include "rdok/metrics.hpp"
#include "rdok/partition.hpp"
#include "rdok/rdo.hpp"
