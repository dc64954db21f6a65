#pragma once

#include "csnicp/error.hpp"
#include "csnicp/features.hpp"
#include "csnicp/kdtree.hpp"
#include "csnicp/mask_io.hpp"
#include "csnicp/metrics.hpp"
#include "csnicp/parallel.hpp"
#include "csnicp/point_cloud.hpp"
#include "csnicp/raster.hpp"
#include "csnicp/registration.hpp"
#include "csnicp/serialization.hpp"
#include "csnicp/synth.hpp"
#include "csnicp/transform.hpp"
#include "csnicp/volume.hpp"
